#include <algorithm>
#include <cmath>
#include <numeric>

#include "leverbid/market.hpp"

namespace leverbid {

double adjust_bid(double bid, double alpha, double range) {
  const double a = std::clamp(alpha, -range, range);
  return std::max(0.0, bid * (1.0 + a));
}

namespace {

// Products with a positive eCPM score, best first; ties go to the lower id.
std::vector<std::size_t> ranking(const std::vector<Product>& products, std::span<const double> bids) {
  if (bids.size() != products.size()) throw std::invalid_argument("auction: one adjusted bid per product required");
  std::vector<std::size_t> order;
  order.reserve(products.size());
  for (std::size_t i = 0; i < products.size(); ++i) {
    if (products[i].apctr_ad * bids[i] > 0.0) order.push_back(i);
  }
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = products[a].apctr_ad * bids[a];
    const double sb = products[b].apctr_ad * bids[b];
    if (sa != sb) return sa > sb;
    return products[a].id < products[b].id;
  });
  return order;
}

void check_settings(const AuctionSettings& s) {
  if (s.requests < 0) throw std::invalid_argument("auction: requests must be >= 0");
  if (s.slots < 1) throw std::invalid_argument("auction: slots must be >= 1");
  if (!(s.match_rate >= 0.0 && s.match_rate <= 1.0)) throw std::invalid_argument("auction: match_rate must lie in [0,1]");
}

}  // namespace

AuctionOutcome run_auction(const std::vector<Product>& products, std::span<const double> adjusted_bids,
                           const AuctionSettings& settings, const WindowStream& stream, bool record_winners) {
  check_settings(settings);
  AuctionOutcome out;
  out.stats.resize(products.size());
  if (products.empty()) return out;
  const auto order = ranking(products, adjusted_bids);
  if (record_winners) out.winners.resize(static_cast<std::size_t>(settings.requests));

  for (int r = 0; r < settings.requests; ++r) {
    int filled = 0;
    const auto req = static_cast<std::uint64_t>(r);
    for (std::size_t idx : order) {
      const auto pid = static_cast<std::uint64_t>(products[idx].id);
      if (stream.uniform(Channel::eligibility, req, pid) >= settings.match_rate) continue;
      auto& st = out.stats[idx];
      st.pv += 1.0;
      if (stream.uniform(Channel::ad_click, req, pid) < products[idx].apctr_ad) {
        st.click += 1.0;
        st.cost += adjusted_bids[idx];
      }
      if (record_winners) out.winners[static_cast<std::size_t>(r)].push_back(products[idx].id);
      if (++filled == settings.slots) break;
    }
  }
  return out;
}

std::vector<double> win_probabilities(const std::vector<Product>& products, std::span<const double> adjusted_bids,
                                      int slots, double match_rate) {
  std::vector<double> win(products.size(), 0.0);
  const auto order = ranking(products, adjusted_bids);
  // dist[j]: probability that exactly j higher-ranked products are eligible (j < slots).
  std::vector<double> dist(static_cast<std::size_t>(slots), 0.0);
  dist[0] = 1.0;
  for (std::size_t idx : order) {
    const double open = std::accumulate(dist.begin(), dist.end(), 0.0);
    win[idx] = match_rate * open;
    for (std::size_t j = dist.size(); j-- > 0;) {
      dist[j] = dist[j] * (1.0 - match_rate) + (j > 0 ? dist[j - 1] * match_rate : 0.0);
    }
  }
  return win;
}

AuctionOutcome expected_auction(const std::vector<Product>& products, std::span<const double> adjusted_bids,
                                const AuctionSettings& settings) {
  check_settings(settings);
  AuctionOutcome out;
  out.stats.resize(products.size());
  if (products.empty()) return out;
  const auto win = win_probabilities(products, adjusted_bids, settings.slots, settings.match_rate);
  for (std::size_t i = 0; i < products.size(); ++i) {
    auto& st = out.stats[i];
    st.pv = settings.requests * win[i];
    st.click = st.pv * products[i].apctr_ad;
    st.cost = st.click * adjusted_bids[i];
  }
  return out;
}

}  // namespace leverbid
