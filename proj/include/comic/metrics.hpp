#pragma once

#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

namespace comic {

// Corpus-level BLEU-1..max_n: modified n-gram precision with per-ngram
// clipping against the best reference count, geometric mean with uniform
// weights, closest-reference-length brevity penalty, no smoothing (a zero
// precision zeroes that order and above).
std::vector<double> bleu(const std::vector<std::vector<std::string>>& hypotheses,
                         const std::vector<std::vector<std::vector<std::string>>>& references,
                         int max_n = 4);

struct CaptionStats {
  double unique_pct = 0;
  double avg_length_words = 0;
  int n_samples = 0;
};

// Uniqueness = share of generated captions not present in the preprocessed
// training corpus (exact string match on space-joined lowercase tokens).
CaptionStats caption_stats(const std::vector<std::string>& generated,
                           const std::unordered_set<std::string>& training_corpus);

// canonical caption string: tokenize + join with single spaces
std::string normalize_caption(const std::string& text);

struct MetricsReport {
  std::vector<double> bleu_scores;
  CaptionStats stats;
};

nlohmann::json metrics_report_to_json(const MetricsReport& report);

}  // namespace comic
