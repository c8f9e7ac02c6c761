#include "comic/metrics.hpp"

#include <cmath>
#include <cstdlib>
#include <map>
#include <stdexcept>

#include "comic/vocab.hpp"

namespace comic {

namespace {

// n-gram -> count, key = tokens joined with an unprintable separator
std::map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& tokens,
                                                std::size_t n) {
  std::map<std::string, std::size_t> counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key;
    for (std::size_t j = 0; j < n; ++j) {
      if (j) key.push_back('\x1f');
      key += tokens[i + j];
    }
    ++counts[key];
  }
  return counts;
}

}  // namespace

std::vector<double> bleu(const std::vector<std::vector<std::string>>& hypotheses,
                         const std::vector<std::vector<std::vector<std::string>>>& references,
                         int max_n) {
  if (hypotheses.empty()) throw std::invalid_argument("bleu: empty hypothesis list");
  if (hypotheses.size() != references.size())
    throw std::invalid_argument("bleu: " + std::to_string(hypotheses.size()) +
                                " hypotheses vs " + std::to_string(references.size()) +
                                " reference sets");
  if (max_n < 1) throw std::invalid_argument("bleu: max_n must be >= 1");

  std::vector<std::size_t> matched(max_n, 0), total(max_n, 0);
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto& hyp = hypotheses[i];
    const auto& refs = references[i];
    if (refs.empty()) throw std::invalid_argument("bleu: hypothesis without references");
    hyp_len += hyp.size();
    // closest reference length; ties go to the shorter reference
    std::size_t best_ref = refs[0].size();
    for (const auto& r : refs) {
      auto diff = [&](std::size_t len) {
        return len > hyp.size() ? len - hyp.size() : hyp.size() - len;
      };
      if (diff(r.size()) < diff(best_ref) || (diff(r.size()) == diff(best_ref) && r.size() < best_ref))
        best_ref = r.size();
    }
    ref_len += best_ref;

    for (int n = 1; n <= max_n; ++n) {
      auto hyp_counts = ngram_counts(hyp, n);
      std::map<std::string, std::size_t> clip;
      for (const auto& r : refs)
        for (const auto& [key, c] : ngram_counts(r, n))
          clip[key] = std::max(clip[key], c);
      for (const auto& [key, c] : hyp_counts) {
        total[n - 1] += c;
        auto it = clip.find(key);
        if (it != clip.end()) matched[n - 1] += std::min(c, it->second);
      }
    }
  }

  double bp = 1.0;
  if (hyp_len == 0) bp = 0.0;
  else if (hyp_len < ref_len)
    bp = std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));

  std::vector<double> scores(max_n, 0.0);
  double log_sum = 0.0;
  bool zero = false;
  for (int n = 1; n <= max_n; ++n) {
    if (matched[n - 1] == 0 || total[n - 1] == 0) zero = true;
    if (!zero) {
      double p = static_cast<double>(matched[n - 1]) / static_cast<double>(total[n - 1]);
      log_sum += std::log(p);
      scores[n - 1] = (log_sum == 0.0) ? bp : bp * std::exp(log_sum / n);
    } else {
      scores[n - 1] = 0.0;
    }
  }
  return scores;
}

std::string normalize_caption(const std::string& text) {
  auto tokens = tokenize(text);
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

CaptionStats caption_stats(const std::vector<std::string>& generated,
                           const std::unordered_set<std::string>& training_corpus) {
  if (generated.empty()) throw std::invalid_argument("caption_stats: no generated captions");
  CaptionStats stats;
  stats.n_samples = static_cast<int>(generated.size());
  std::size_t unseen = 0, words = 0;
  for (const auto& g : generated) {
    auto norm = normalize_caption(g);
    if (training_corpus.find(norm) == training_corpus.end()) ++unseen;
    words += tokenize(norm).size();
  }
  stats.unique_pct = 100.0 * static_cast<double>(unseen) / static_cast<double>(generated.size());
  stats.avg_length_words = static_cast<double>(words) / static_cast<double>(generated.size());
  return stats;
}

nlohmann::json metrics_report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["bleu"] = report.bleu_scores;
  j["unique_pct"] = report.stats.unique_pct;
  j["avg_len"] = report.stats.avg_length_words;
  j["n"] = report.stats.n_samples;
  return j;
}

}  // namespace comic
