#include "capgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

#include "capgan/error.hpp"

namespace capgan::metrics {

namespace {

std::string ngram_key(const TokenSeq& s, std::size_t start, int n) {
  std::string key;
  for (int j = 0; j < n; ++j) {
    if (j) key += ' ';
    key += s[start + static_cast<std::size_t>(j)];
  }
  return key;
}

std::unordered_map<std::string, std::size_t> ngram_counts(const TokenSeq& s, int n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (static_cast<int>(s.size()) >= n)
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= s.size(); ++i)
      ++counts[ngram_key(s, i, n)];
  return counts;
}

std::string join(const TokenSeq& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ' ';
    out += s[i];
  }
  return out;
}

}  // namespace

double div_n(const std::vector<TokenSeq>& set, int n) {
  if (set.empty()) throw ContractError("div_n: empty caption set");
  if (n < 1) throw ParamError("div_n: n must be >= 1");
  std::set<std::string> distinct;
  std::size_t words = 0;
  for (const auto& cap : set) {
    if (cap.empty()) throw ContractError("div_n: empty caption in set");
    words += cap.size();
    if (static_cast<int>(cap.size()) >= n)
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cap.size(); ++i)
        distinct.insert(ngram_key(cap, i, n));
  }
  return static_cast<double>(distinct.size()) / static_cast<double>(words);
}

double bleu(const TokenSeq& candidate, const std::vector<TokenSeq>& references,
            int max_n) {
  if (references.empty()) throw ContractError("bleu: no references");
  if (max_n < 1) throw ParamError("bleu: max_n must be >= 1");
  std::size_t c = candidate.size();
  if (c == 0) return 0.0;
  double smooth = 1.0 / (2.0 * static_cast<double>(c));

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    auto cand = ngram_counts(candidate, n);
    std::unordered_map<std::string, std::size_t> max_ref;
    for (const auto& ref : references)
      for (const auto& [k, v] : ngram_counts(ref, n)) {
        auto& m = max_ref[k];
        m = std::max(m, v);
      }
    std::size_t total = 0, clipped = 0;
    for (const auto& [k, v] : cand) {
      total += v;
      auto it = max_ref.find(k);
      if (it != max_ref.end()) clipped += std::min(v, it->second);
    }
    double p = (total == 0 || clipped == 0)
                   ? smooth
                   : static_cast<double>(clipped) / static_cast<double>(total);
    log_sum += std::log(p) / static_cast<double>(max_n);
  }

  // closest reference length, ties toward the shorter reference
  std::size_t r = references[0].size();
  for (const auto& ref : references) {
    std::size_t len = ref.size();
    auto dist = [&](std::size_t l) {
      return l > c ? l - c : c - l;
    };
    if (dist(len) < dist(r) || (dist(len) == dist(r) && len < r)) r = len;
  }
  double bp = c >= r ? 1.0
                     : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
  return bp * std::exp(log_sum);
}

double mbleu(const std::vector<TokenSeq>& set, int max_n) {
  if (set.size() < 2) throw ContractError("mbleu: need at least 2 captions");
  double sum = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::vector<TokenSeq> rest;
    for (std::size_t j = 0; j < set.size(); ++j)
      if (j != i) rest.push_back(set[j]);
    sum += bleu(set[i], rest, max_n);
  }
  return sum / static_cast<double>(set.size());
}

CorpusStats corpus_stats(const std::vector<TokenSeq>& generated,
                         const std::vector<TokenSeq>& training) {
  if (generated.empty()) throw ContractError("corpus_stats: empty generated corpus");
  CorpusStats stats;

  std::map<std::string, std::size_t> word_counts;
  for (const auto& cap : generated)
    for (const auto& w : cap) ++word_counts[w];
  stats.vocab_size = word_counts.size();

  std::set<std::string> train_sentences;
  for (const auto& cap : training) train_sentences.insert(join(cap));
  std::size_t novel = 0;
  for (const auto& cap : generated)
    if (!train_sentences.count(join(cap))) ++novel;
  stats.pct_novel = 100.0 * static_cast<double>(novel) / static_cast<double>(generated.size());

  std::size_t max_count = 0;
  for (const auto& [w, n] : word_counts) max_count = std::max(max_count, n);
  for (std::size_t k = 1; k <= max_count + 1; ++k) {
    std::size_t cnt = 0;
    for (const auto& [w, n] : word_counts)
      if (n >= k) ++cnt;
    stats.vocab_curve[k] = cnt;
  }
  return stats;
}

CountRatioTable count_ratios(const std::vector<TokenSeq>& generated,
                             const std::vector<TokenSeq>& training, int n,
                             std::size_t min_train_count) {
  if (generated.empty() || training.empty())
    throw ContractError("count_ratios: empty corpus");
  if (min_train_count < 1) throw ParamError("count_ratios: min_train_count must be >= 1");
  if (n < 1) throw ParamError("count_ratios: n must be >= 1");

  std::map<std::string, std::size_t> train_counts, test_counts;
  for (const auto& cap : training)
    if (static_cast<int>(cap.size()) >= n)
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cap.size(); ++i)
        ++train_counts[ngram_key(cap, i, n)];
  for (const auto& cap : generated)
    if (static_cast<int>(cap.size()) >= n)
      for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= cap.size(); ++i)
        ++test_counts[ngram_key(cap, i, n)];

  double size_ratio = static_cast<double>(generated.size()) /
                      static_cast<double>(training.size());

  CountRatioTable table;
  table.n = n;
  double ratio_sum = 0.0;
  for (const auto& [gram, m] : train_counts) {
    if (m < min_train_count) continue;
    CountRatioRow row;
    row.ngram = gram;
    row.n = n;
    row.train_count = m;
    auto it = test_counts.find(gram);
    row.test_count = it == test_counts.end() ? 0 : it->second;
    row.expected = static_cast<double>(m) * size_ratio;
    row.ratio = static_cast<double>(row.test_count) / row.expected;
    ratio_sum += row.ratio;
    table.rows.push_back(std::move(row));
  }
  if (!table.rows.empty())
    table.mean_ratio = ratio_sum / static_cast<double>(table.rows.size());

  // log-2 bins on train count, starting at min_train_count
  std::size_t max_m = 0;
  for (const auto& r : table.rows) max_m = std::max(max_m, r.train_count);
  std::size_t lo = min_train_count;
  while (lo <= max_m) {
    std::size_t hi = lo * 2;
    RatioBin bin;
    bin.x = static_cast<double>(lo);
    double sum = 0.0;
    for (const auto& r : table.rows)
      if (r.train_count >= lo && r.train_count < hi) {
        sum += r.ratio;
        ++bin.count;
      }
    if (bin.count) {
      bin.mean = sum / static_cast<double>(bin.count);
      table.bins.push_back(bin);
    }
    lo = hi;
  }

  // ratio histogram: [0, 3) in steps of 0.1 plus an overflow bucket
  for (int i = 0; i <= 30; ++i) table.hist_edges.push_back(0.1 * i);
  table.hist_counts.assign(table.hist_edges.size(), 0);
  for (const auto& r : table.rows) {
    std::size_t idx = r.ratio >= 3.0
                          ? table.hist_counts.size() - 1
                          : static_cast<std::size_t>(r.ratio / 0.1);
    ++table.hist_counts[idx];
  }
  return table;
}

std::vector<std::pair<std::string, std::size_t>> repeated_caption_table(
    const std::vector<std::string>& captions) {
  if (captions.empty()) throw ContractError("repeated_caption_table: empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& c : captions) ++counts[c];
  std::vector<std::pair<std::string, std::size_t>> rows(counts.begin(), counts.end());
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return rows;
}

}  // namespace capgan::metrics
