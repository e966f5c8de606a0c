#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "etd/dataset.hpp"
#include "etd/rng.hpp"

// Random under-bagging: every bag keeps the complete minority class and draws
// an equal number of majority samples. Draws cycle through a shuffled
// majority deck, reshuffling only once the deck is exhausted, so no majority
// sample is reused before every majority sample has been used once.

namespace etd {

struct Bag {
  std::vector<std::size_t> minority_indices;
  std::vector<std::size_t> majority_indices;

  bool operator==(const Bag&) const = default;
};

struct BaggingPlan {
  std::vector<Bag> bags;
  std::uint64_t seed = 0;

  std::size_t bag_count() const { return bags.size(); }
  bool operator==(const BaggingPlan&) const = default;
};

inline BaggingPlan make_bags(std::span<const Label> labels, std::size_t bag_count,
                             std::uint64_t seed) {
  if (bag_count == 0 || bag_count % 2 == 0) {
    throw std::invalid_argument("sampler: bag count must be odd, got " + std::to_string(bag_count));
  }
  std::vector<std::size_t> theft, normal;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    (labels[i] == Label::Theft ? theft : normal).push_back(i);
  }
  if (theft.empty() || normal.empty()) {
    throw std::invalid_argument("sampler: both classes must be present");
  }
  // Minority by empirical count; a tie counts theft as the minority.
  const bool theft_is_minority = theft.size() <= normal.size();
  const std::vector<std::size_t>& minority = theft_is_minority ? theft : normal;
  std::vector<std::size_t> deck = theft_is_minority ? normal : theft;
  const std::size_t m = minority.size();
  const std::size_t deck_size = deck.size();

  rng::Engine eng(seed);
  eng.shuffle(deck);
  std::size_t pos = 0;

  BaggingPlan plan;
  plan.seed = seed;
  plan.bags.resize(bag_count);
  std::vector<char> in_bag(labels.size(), 0);
  for (auto& bag : plan.bags) {
    bag.minority_indices = minority;
    bag.majority_indices.reserve(m);
    for (std::size_t j = 0; j < m; ++j) {
      if (pos == deck_size) {
        eng.shuffle(deck);
        pos = 0;
      }
      if (in_bag[deck[pos]]) {
        // A mid-bag reshuffle can resurface an index already drawn into this
        // bag; park it deeper in the deck and take the first fresh one.
        // m <= deck_size guarantees a fresh index exists.
        std::size_t k = pos + 1;
        while (k < deck_size && in_bag[deck[k]]) ++k;
        if (k == deck_size) throw std::logic_error("sampler: no fresh majority index available");
        std::swap(deck[pos], deck[k]);
      }
      in_bag[deck[pos]] = 1;
      bag.majority_indices.push_back(deck[pos]);
      ++pos;
    }
    for (std::size_t idx : bag.majority_indices) in_bag[idx] = 0;
    std::sort(bag.majority_indices.begin(), bag.majority_indices.end());
  }
  return plan;
}

// Plain-text index listing for reproducibility audits.
inline std::string plan_to_text(const BaggingPlan& plan) {
  std::ostringstream out;
  out << "seed " << plan.seed << "\n";
  out << "bags " << plan.bag_count() << "\n";
  for (std::size_t b = 0; b < plan.bags.size(); ++b) {
    out << "bag " << b << " minority:";
    for (std::size_t i : plan.bags[b].minority_indices) out << ' ' << i;
    out << "\nbag " << b << " majority:";
    for (std::size_t i : plan.bags[b].majority_indices) out << ' ' << i;
    out << '\n';
  }
  return out.str();
}

}  // namespace etd
