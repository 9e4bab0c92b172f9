#include "vrebert/data/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <set>

#include "vrebert/data/splits.hpp"
#include "vrebert/errors.hpp"
#include "vrebert/numerics/rng.hpp"

namespace vrebert {

namespace {

constexpr std::array<const char*, 24> kCategoryNames = {
    "person", "hat",    "table",  "chair",  "car",    "dog",
    "tree",   "lamp",   "cup",    "bench",  "bike",   "sign",
    "horse",  "bag",    "plate",  "bottle", "window", "door",
    "shelf",  "box",    "ball",   "kite",   "clock",  "plant"};

const std::array<const char*, synthetic_predicate::kCount> kPredicateNames = {
    "above", "below", "left of", "right of",
    "inside", "contains", "near", "wears"};

// Per-category placement priors, fixed by category index so a category keeps
// its character across seeds.
struct CategoryPrior {
  double size;      // fraction of min(W, H)
  double aspect;    // height / width
  double vertical;  // preferred center height, fraction of H
};

CategoryPrior category_prior(std::size_t category) {
  if (category == kPersonCategory) return {0.42, 2.2, 0.55};
  if (category == kHatCategory) return {0.10, 0.6, 0.35};
  Rng rng = Rng::stream(0xC47E6021ull + category, "category-prior");
  return {rng.uniform(0.10, 0.45), rng.uniform(0.5, 1.8),
          rng.uniform(0.25, 0.75)};
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

BoundingBox clamp_box(double cx, double cy, double w, double h, double W,
                      double H) {
  w = std::min(w, W);
  h = std::min(h, H);
  cx = std::clamp(cx, w / 2, W - w / 2);
  cy = std::clamp(cy, h / 2, H - h / 2);
  BoundingBox b{round2(cx - w / 2), round2(cy - h / 2), round2(cx + w / 2),
                round2(cy + h / 2)};
  b.x_min = std::clamp(b.x_min, 0.0, W);
  b.y_min = std::clamp(b.y_min, 0.0, H);
  b.x_max = std::clamp(b.x_max, b.x_min, W);
  b.y_max = std::clamp(b.y_max, b.y_min, H);
  return b;
}

Detection place_object(Rng& rng, std::size_t category, double W, double H,
                       const std::vector<Detection>& existing) {
  const auto prior = category_prior(category);
  const double side = std::min(W, H);
  Detection d;
  d.category_id = category;
  d.confidence = std::round(rng.uniform(0.5, 1.0) * 1000.0) / 1000.0;

  const double base = prior.size * side * rng.uniform(0.8, 1.2);
  double w = base / std::sqrt(prior.aspect);
  double h = base * std::sqrt(prior.aspect);

  // A hat is usually worn: drop it over the top edge of a person.
  if (category == kHatCategory && rng.uniform() < 0.6) {
    std::vector<const Detection*> people;
    for (const auto& e : existing) {
      if (e.category_id == kPersonCategory) people.push_back(&e);
    }
    if (!people.empty()) {
      const auto& p = *people[rng.below(people.size())];
      const double cx = p.bbox.center_x() + rng.normal(0.0, 0.1 * p.bbox.width());
      const double cy = p.bbox.y_min + h * rng.uniform(-0.4, 0.1);
      d.bbox = clamp_box(cx, cy, w, h, W, H);
      return d;
    }
  }
  // Sometimes nest a smaller object inside a larger one.
  if (!existing.empty() && rng.uniform() < 0.25) {
    const auto& host = existing[rng.below(existing.size())];
    const double hw = host.bbox.width(), hh = host.bbox.height();
    if (w < 0.8 * hw && h < 0.8 * hh) {
      const double cx = rng.uniform(host.bbox.x_min + w / 2, host.bbox.x_max - w / 2);
      const double cy = rng.uniform(host.bbox.y_min + h / 2, host.bbox.y_max - h / 2);
      d.bbox = clamp_box(cx, cy, w, h, W, H);
      return d;
    }
  }
  const double cx = rng.uniform(w / 2, std::max(w / 2, W - w / 2));
  const double cy = prior.vertical * H + rng.normal(0.0, 0.2 * H);
  d.bbox = clamp_box(cx, cy, w, h, W, H);
  return d;
}

std::vector<float> make_feature(Rng& rng, const Detection& d, double W,
                                double H, std::size_t num_categories,
                                std::size_t dim, double sigma) {
  std::vector<float> f(dim, 0.0f);
  const auto& b = d.bbox;
  const std::array<double, 5> geometry = {
      b.x_min / W, b.y_min / H, b.x_max / W, b.y_max / H,
      b.area() / (W * H)};
  for (std::size_t i = 0; i < 5; ++i) {
    f[i] = static_cast<float>(geometry[i] + rng.normal(0.0, sigma));
  }
  for (std::size_t c = 0; c < num_categories; ++c) {
    const double hot = c == d.category_id ? 1.0 : 0.0;
    f[5 + c] = static_cast<float>(hot + rng.normal(0.0, sigma));
  }
  return f;
}

ImageRecord make_image(Rng& rng, const SyntheticConfig& config,
                       std::string image_id) {
  ImageRecord image;
  image.image_id = std::move(image_id);
  image.width = std::round(config.world_size * rng.uniform(0.6, 1.0));
  image.height = std::round(config.world_size * rng.uniform(0.6, 1.0));
  const auto span = config.max_objects - config.min_objects + 1;
  const auto count = config.min_objects + rng.below(span);
  for (std::size_t i = 0; i < count; ++i) {
    const auto category = rng.below(config.num_categories);
    image.detections.push_back(
        place_object(rng, category, image.width, image.height, image.detections));
  }
  const auto n = image.detections.size();
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t o = 0; o < n; ++o) {
      if (s == o) continue;
      for (auto p : geometric_predicates(image.detections[s], image.detections[o],
                                         image.width, image.height)) {
        image.relationships.push_back({s, p, o});
      }
    }
  }
  const auto dim = config.resolved_feature_dim();
  for (auto& d : image.detections) {
    d.feature = make_feature(rng, d, image.width, image.height,
                             config.num_categories, dim, config.noise_sigma);
  }
  return image;
}

}  // namespace

std::size_t SyntheticConfig::resolved_feature_dim() const {
  return feature_dim == 0 ? 5 + num_categories : feature_dim;
}

std::size_t SyntheticConfig::resolved_test_images() const {
  return num_test_images == 0 ? std::max<std::size_t>(1, num_images / 4)
                              : num_test_images;
}

void SyntheticConfig::validate() const {
  if (num_categories < 4) {
    throw ConfigError("synthetic data needs at least 4 categories, got " +
                      std::to_string(num_categories));
  }
  if (num_categories > kCategoryNames.size()) {
    throw ConfigError("synthetic data supports at most " +
                      std::to_string(kCategoryNames.size()) + " categories");
  }
  if (num_images < 2) {
    throw ConfigError("synthetic data needs at least 2 images, got " +
                      std::to_string(num_images));
  }
  if (!(world_size >= 16.0) || !std::isfinite(world_size)) {
    throw ConfigError("world size must be at least 16 pixels");
  }
  if (min_objects < 2 || max_objects < min_objects) {
    throw ConfigError("object count range must satisfy 2 <= min <= max");
  }
  if (feature_dim != 0 && feature_dim < 5 + num_categories) {
    throw ConfigError("feature dim " + std::to_string(feature_dim) +
                      " cannot hold 5 geometry + " +
                      std::to_string(num_categories) + " category components");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("holdout fraction must lie in [0, 1)");
  }
  if (!(noise_sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
}

CategoryVocab synthetic_vocab(std::size_t num_categories) {
  CategoryVocab vocab;
  for (std::size_t c = 0; c < num_categories && c < kCategoryNames.size(); ++c) {
    vocab.objects.emplace_back(kCategoryNames[c]);
  }
  for (auto name : kPredicateNames) vocab.predicates.emplace_back(name);
  return vocab;
}

std::vector<std::size_t> geometric_predicates(const Detection& sub,
                                              const Detection& obj,
                                              double width, double height) {
  namespace sp = synthetic_predicate;
  const double side = std::min(width, height);
  const double margin = 0.05 * side;
  const auto& s = sub.bbox;
  const auto& o = obj.bbox;
  const double dx = s.center_x() - o.center_x();
  const double dy = s.center_y() - o.center_y();

  std::set<std::size_t> preds;
  if (dy < -margin) preds.insert(sp::kAbove);  // image y grows downward
  if (dy > margin) preds.insert(sp::kBelow);
  if (dx < -margin) preds.insert(sp::kLeftOf);
  if (dx > margin) preds.insert(sp::kRightOf);
  if (box_within(s, o) && s != o) preds.insert(sp::kInside);
  if (box_within(o, s) && s != o) preds.insert(sp::kContains);
  if (std::hypot(dx, dy) < 0.2 * side) preds.insert(sp::kNear);
  if (sub.category_id == kPersonCategory && obj.category_id == kHatCategory &&
      boxes_overlap(s, o) && preds.contains(sp::kBelow)) {
    preds.erase(sp::kBelow);
    preds.insert(sp::kWears);
  }
  return {preds.begin(), preds.end()};
}

SyntheticDataset generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  SyntheticDataset out;
  out.vocab = synthetic_vocab(config.num_categories);
  out.feature_dim = config.resolved_feature_dim();

  Rng rng = Rng::stream(config.seed, "data");
  char id[32];
  std::vector<ImageRecord> train, test;
  for (std::size_t i = 0; i < config.num_images; ++i) {
    std::snprintf(id, sizeof id, "train_%05zu", i);
    train.push_back(make_image(rng, config, id));
  }
  for (std::size_t i = 0; i < config.resolved_test_images(); ++i) {
    std::snprintf(id, sizeof id, "test_%05zu", i);
    test.push_back(make_image(rng, config, id));
  }

  // Withhold a seeded subset of triplet types from train only.
  Rng holdout = Rng::stream(config.seed, "holdout");
  std::set<TripletType> held;
  for (std::size_t s = 0; s < config.num_categories; ++s) {
    for (std::size_t p = 0; p < synthetic_predicate::kCount; ++p) {
      for (std::size_t o = 0; o < config.num_categories; ++o) {
        if (holdout.uniform() < config.holdout_fraction) held.insert({s, p, o});
      }
    }
  }
  std::set<TripletType> occurring = triplet_types(train);
  occurring.merge(triplet_types(test));
  for (const auto& t : held) {
    if (occurring.contains(t)) out.held_out_types.push_back(t);
  }
  for (auto& image : train) {
    std::erase_if(image.relationships, [&](const RelationshipInstance& r) {
      return held.contains(triplet_type(image, r));
    });
  }
  out.split = make_zero_shot_split(std::move(train), std::move(test));
  return out;
}

}  // namespace vrebert
