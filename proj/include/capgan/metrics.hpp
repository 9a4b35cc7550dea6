#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace capgan::metrics {

using TokenSeq = std::vector<std::string>;

// |distinct n-grams across the set| / |total words across the set|.
// The denominator is words for every n, as defined.
double div_n(const std::vector<TokenSeq>& set, int n);

// Modified n-gram precision BLEU with brevity penalty. Any zero (or
// undefined) precision is replaced by 1/(2 * candidate_length) before the
// geometric mean.
double bleu(const TokenSeq& candidate, const std::vector<TokenSeq>& references,
            int max_n = 4);

// Mean of BLEU(s_i | S \ {s_i}); lower is more diverse.
double mbleu(const std::vector<TokenSeq>& set, int max_n = 4);

struct CorpusStats {
  std::size_t vocab_size = 0;
  double pct_novel = 0.0;                   // in [0, 100]
  std::map<std::size_t, std::size_t> vocab_curve;  // threshold k -> #words with count >= k
};

CorpusStats corpus_stats(const std::vector<TokenSeq>& generated,
                         const std::vector<TokenSeq>& training);

struct CountRatioRow {
  std::string ngram;
  int n = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  double expected = 0.0;  // train_count * |test| / |train|, caption counts
  double ratio = 0.0;
};

struct RatioBin {
  double x = 0.0;  // lower edge of the train-count bin
  double mean = 0.0;
  std::size_t count = 0;
};

struct CountRatioTable {
  int n = 0;
  std::vector<CountRatioRow> rows;
  std::vector<RatioBin> bins;             // mean ratio vs train count, log-2 bins
  std::vector<double> hist_edges;         // ratio histogram
  std::vector<std::size_t> hist_counts;   // size = edges.size(); last bin is overflow
  double mean_ratio = 0.0;
};

CountRatioTable count_ratios(const std::vector<TokenSeq>& generated,
                             const std::vector<TokenSeq>& training, int n,
                             std::size_t min_train_count);

// Exact-duplicate counts, descending, ties by caption text.
std::vector<std::pair<std::string, std::size_t>> repeated_caption_table(
    const std::vector<std::string>& captions);

}  // namespace capgan::metrics
