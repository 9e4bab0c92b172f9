#include "vrebert/evaluation/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <json.hpp>
#include <map>
#include <set>
#include <tuple>

#include "vrebert/data/features.hpp"
#include "vrebert/errors.hpp"
#include "vrebert/numerics/parallel.hpp"
#include "vrebert/numerics/rng.hpp"

namespace vrebert {

namespace {

using Key = std::tuple<std::size_t, std::size_t, std::size_t>;

Key key_of(const RelationshipInstance& r) {
  return {r.sub_idx, r.obj_idx, r.predicate_id};
}

}  // namespace

double recall_at_n(std::span<const std::vector<ScoredTriplet>> predictions,
                   std::span<const std::vector<RelationshipInstance>> ground_truth,
                   std::size_t n, std::vector<std::size_t>* per_image_hits) {
  if (n < 1) throw ContractError("recall@N needs N >= 1");
  if (predictions.size() != ground_truth.size()) {
    throw ContractError("recall_at_n: " + std::to_string(predictions.size()) +
                        " prediction lists for " +
                        std::to_string(ground_truth.size()) + " images");
  }
  if (per_image_hits) per_image_hits->assign(predictions.size(), 0);
  std::size_t total = 0, hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    std::set<Key> gt;
    for (const auto& r : ground_truth[i]) gt.insert(key_of(r));
    std::set<Key> found;
    const auto& ranked = predictions[i];
    const auto take = std::min(n, ranked.size());
    for (std::size_t k = 0; k < take; ++k) {
      const Key key{ranked[k].sub_idx, ranked[k].obj_idx, ranked[k].predicate_id};
      if (gt.count(key)) found.insert(key);
    }
    total += gt.size();
    hits += found.size();
    if (per_image_hits) (*per_image_hits)[i] = found.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

double EvalReport::recall_at(std::size_t n) const {
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (ns[i] == n) return recall[i];
  }
  throw LookupError("recall@" + std::to_string(n) + " was not evaluated");
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  if (!label.empty()) j["label"] = label;
  j["task"] = task;
  j["pair_mode"] = pair_mode;
  nlohmann::ordered_json r = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < ns.size(); ++i) {
    r["R@" + std::to_string(ns[i])] = recall[i];
  }
  j["recall"] = r;
  j["top1_per_pair"] = top1_per_pair;
  j["ground_truth"] = ground_truth;
  j["pairs"] = pairs;
  j["images"] = image_ids.size();
  nlohmann::ordered_json h = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < ns.size(); ++i) {
    h["R@" + std::to_string(ns[i])] = hits[i];
  }
  j["image_hits"] = h;
  j["config_fingerprint"] = config_fingerprint;
  j["seed_fingerprint"] = seed_fingerprint;
  return j.dump();
}

std::string seed_fingerprint(std::uint64_t seed) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(
                    fnv1a64("seed:" + std::to_string(seed))));
  return buf;
}

namespace {

// Ranks every candidate pair of each image once at the largest N and scores
// `counted[i]` against it.
EvalReport evaluate(const PairScorer& scorer,
                    const std::vector<const ImageRecord*>& images,
                    const std::vector<std::vector<RelationshipInstance>>& counted,
                    const EvalOptions& options, const std::string& task) {
  if (options.ns.empty()) throw ContractError("no N values requested");
  std::vector<std::size_t> ns = options.ns;
  for (auto n : ns) {
    if (n < 1) throw ContractError("recall@N needs N >= 1");
  }
  const auto max_n = *std::max_element(ns.begin(), ns.end());

  const auto count = images.size();
  std::vector<std::vector<ScoredTriplet>> ranked(count);
  std::vector<std::size_t> pair_total(count, 0), pair_hits(count, 0);
  parallel_for(count, [&](std::size_t i) {
    const auto& image = *images[i];
    const auto pairs = candidate_pairs(image, options.mode);
    if (pairs.empty()) return;
    const auto dists = scorer(image, pairs);
    ranked[i] = rank_scored(image, pairs, dists, max_n, options.mode);

    std::map<DetectionPair, std::set<std::size_t>> truth;
    for (const auto& r : image.relationships) {
      truth[{r.sub_idx, r.obj_idx}].insert(r.predicate_id);
    }
    std::set<DetectionPair> evaluated;
    for (const auto& r : counted[i]) evaluated.emplace(r.sub_idx, r.obj_idx);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      if (!evaluated.count(pairs[k])) continue;
      const auto& d = dists[k];
      const auto best = static_cast<std::size_t>(
          std::max_element(d.begin(), d.end()) - d.begin());
      ++pair_total[i];
      if (truth[pairs[k]].count(best)) ++pair_hits[i];
    }
  });

  EvalReport report;
  report.task = task;
  report.pair_mode = to_string(options.mode);
  report.ns = ns;
  report.seed_fingerprint = seed_fingerprint(options.seed);
  for (const auto* image : images) report.image_ids.push_back(image->image_id);
  for (const auto& gt : counted) {
    std::set<Key> unique;
    for (const auto& r : gt) unique.insert(key_of(r));
    report.ground_truth += unique.size();
  }
  for (auto n : ns) {
    std::vector<std::size_t> hits;
    report.recall.push_back(recall_at_n(ranked, counted, n, &hits));
    report.hits.push_back(std::move(hits));
  }
  std::size_t pairs = 0, correct = 0;
  for (std::size_t i = 0; i < count; ++i) {
    pairs += pair_total[i];
    correct += pair_hits[i];
  }
  report.pairs = pairs;
  report.top1_per_pair =
      pairs == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(pairs);
  return report;
}

}  // namespace

EvalReport eval_predicate_prediction(const PairScorer& scorer,
                                     const std::vector<ImageRecord>& test,
                                     const EvalOptions& options) {
  if (test.empty()) throw ContractError("predicate evaluation on an empty split");
  std::vector<const ImageRecord*> images;
  std::vector<std::vector<RelationshipInstance>> counted;
  for (const auto& image : test) {
    images.push_back(&image);
    counted.push_back(image.relationships);
  }
  return evaluate(scorer, images, counted, options, "predicate");
}

EvalReport eval_predicate_prediction(const Model& model,
                                     const std::vector<ImageRecord>& test,
                                     const EvalOptions& options) {
  auto report = eval_predicate_prediction(model_scorer(model), test, options);
  report.config_fingerprint = model.config().fingerprint();
  return report;
}

EvalReport eval_zero_shot(const PairScorer& scorer, const DatasetSplit& split,
                          const EvalOptions& options) {
  if (split.zero_shot_test.empty()) {
    throw ContractError("the split has no zero-shot test relationships");
  }
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    index.emplace(split.test[i].image_id, i);
  }
  std::map<std::size_t, std::vector<RelationshipInstance>> grouped;
  for (const auto& z : split.zero_shot_test) {
    auto it = index.find(z.image_id);
    if (it == index.end()) {
      throw LookupError("zero-shot instance names unknown test image '" +
                        z.image_id + "'");
    }
    grouped[it->second].push_back(z.relationship);
  }
  std::vector<const ImageRecord*> images;
  std::vector<std::vector<RelationshipInstance>> counted;
  for (auto& [i, rels] : grouped) {
    images.push_back(&split.test[i]);
    counted.push_back(std::move(rels));
  }
  return evaluate(scorer, images, counted, options, "zero_shot_predicate");
}

EvalReport eval_zero_shot(const Model& model, const DatasetSplit& split,
                          const EvalOptions& options) {
  auto report = eval_zero_shot(model_scorer(model), split, options);
  report.config_fingerprint = model.config().fingerprint();
  return report;
}

std::vector<AblationRow> run_ablation_suite(const CategoryVocab& categories,
                                            const DatasetSplit& split,
                                            std::size_t feature_dim,
                                            const AblationConfig& config) {
  if (!has_features(split.train, feature_dim) ||
      !has_features(split.test, feature_dim)) {
    throw ConfigError("the ablation suite needs region features of dimension " +
                      std::to_string(feature_dim));
  }
  struct Setting {
    const char* name;
    bool visual, frozen, image_position;
    PositionMode position;
  };
  const Setting settings[] = {
      {"language-only", false, false, false, config.base.position_mode},
      {"+pretrained-features-frozen", true, true, false, PositionMode::kAbsolute},
      {"+fine-tuned", true, false, false, PositionMode::kAbsolute},
      {"+image-pos", true, false, true, PositionMode::kAbsolute},
      {"+relative-pos", true, false, true, PositionMode::kRelative},
  };
  const auto vocab = Vocabulary::for_categories(categories);
  std::vector<AblationRow> rows;
  for (const auto& s : settings) {
    ModelConfig mc = config.base;
    mc.feature_dim = feature_dim;
    mc.visual_input = s.visual;
    mc.freeze_feature_projection = s.frozen;
    mc.image_position = s.image_position;
    mc.position_mode = s.position;
    Model model(mc, vocab, categories, config.init_seed);
    TrainConfig tc = config.train;
    tc.init_snapshot.clear();
    tc.snapshot_out.clear();
    AblationRow row;
    row.name = s.name;
    row.log = s.visual ? train_stage3(model, split.train, tc).log
                       : train_stage2(model, split.train, tc).log;
    row.model = model.config();
    row.report = eval_predicate_prediction(model, split.test, config.eval);
    row.report.label = s.name;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_report_table(std::span<const EvalReport> reports) {
  std::vector<std::size_t> ns;
  for (const auto& r : reports) {
    for (auto n : r.ns) {
      if (std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
    }
  }
  std::sort(ns.begin(), ns.end());
  std::size_t width = 5;
  for (const auto& r : reports) width = std::max(width, r.label.size());
  width = std::max(width, std::string("zero_shot_predicate").size());

  auto pad = [](std::string s, std::size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  std::string out = pad("row", width) + "  " + pad("task", 19) + "  mode";
  for (auto n : ns) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "  %8s", ("R@" + std::to_string(n)).c_str());
    out += buf;
  }
  out += "  R@1/pair\n";
  for (const auto& r : reports) {
    out += pad(r.label.empty() ? "-" : r.label, width) + "  " + pad(r.task, 19) +
           "  " + pad(r.pair_mode, 4);
    for (auto n : ns) {
      char buf[16];
      auto it = std::find(r.ns.begin(), r.ns.end(), n);
      if (it == r.ns.end()) {
        std::snprintf(buf, sizeof buf, "  %8s", "-");
      } else {
        std::snprintf(buf, sizeof buf, "  %8.4f", r.recall[it - r.ns.begin()]);
      }
      out += buf;
    }
    char buf[16];
    std::snprintf(buf, sizeof buf, "  %8.4f\n", r.top1_per_pair);
    out += buf;
  }
  return out;
}

}  // namespace vrebert
