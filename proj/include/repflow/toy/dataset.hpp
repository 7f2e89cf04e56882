#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "repflow/rng.hpp"
#include "repflow/tensor.hpp"
#include "repflow/toy/textures.hpp"

namespace repflow::toy {

// A short clip: frames all share one shape, the label indexes the motion
// direction class.
struct VideoSample {
  std::vector<Tensor<double>> frames;
  int label = 0;
};

struct ToyDatasetConfig {
  int num_classes = 4;  // up, down, left, right, then diagonals
  int samples_per_class = 8;
  int frame_count = 8;
  int height = 32;
  int width = 32;
  std::uint64_t texture_seed = 0;
  int speed_min = 1;  // pixels per frame, integer so motion is an exact
  int speed_max = 2;  // circular shift and brightness consistency holds
  bool distractor_appearance = false;

  void validate() const {
    if (num_classes < 2 || num_classes > 8)
      throw std::invalid_argument("ToyDatasetConfig: num_classes must be in [2, 8]");
    if (samples_per_class < 1)
      throw std::invalid_argument("ToyDatasetConfig: samples_per_class must be >= 1");
    if (frame_count < 2)
      throw std::invalid_argument("ToyDatasetConfig: frame_count must be >= 2");
    if (height < 8 || width < 8)
      throw std::invalid_argument("ToyDatasetConfig: spatial size must be >= 8");
    if (speed_min < 1 || speed_max < speed_min)
      throw std::invalid_argument("ToyDatasetConfig: speed range must be positive");
  }
};

struct ToyDataset {
  std::vector<VideoSample> train;
  std::vector<VideoSample> test;
};

namespace detail {

// Unit integer velocities: four cardinals first, then the diagonals.
inline std::pair<int, int> class_direction(int label) {
  static constexpr std::pair<int, int> dirs[8] = {
      {0, -1}, {0, 1}, {-1, 0}, {1, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  return dirs[label];
}

inline std::vector<VideoSample> gen_split(const ToyDatasetConfig& cfg, Rng rng) {
  std::vector<VideoSample> out;
  out.reserve(static_cast<std::size_t>(cfg.num_classes) * cfg.samples_per_class);
  for (int label = 0; label < cfg.num_classes; ++label) {
    const auto [dx, dy] = class_direction(label);
    for (int i = 0; i < cfg.samples_per_class; ++i) {
      // Texture and speed draws do not depend on the label, so a single
      // frame carries no class information.
      const PeriodicTexture tex = random_texture(rng, cfg.width, cfg.height);
      const int speed = rng.uniform_int(cfg.speed_min, cfg.speed_max);
      double gain = 1.0, offset = 0.0;
      if (cfg.distractor_appearance) {
        gain = rng.uniform(0.5, 1.5);
        offset = rng.uniform(-20.0, 20.0);
      }
      VideoSample s;
      s.label = label;
      s.frames.reserve(static_cast<std::size_t>(cfg.frame_count));
      for (int t = 0; t < cfg.frame_count; ++t) {
        Tensor<double> frame =
            tex.render(static_cast<double>(t) * speed * dx, static_cast<double>(t) * speed * dy);
        if (cfg.distractor_appearance) {
          for (std::size_t k = 0; k < frame.size(); ++k) frame[k] = gain * frame[k] + offset;
        }
        s.frames.push_back(std::move(frame));
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace detail

// Integer speeds and periodic textures make every frame an exact circular
// shift of the first, so the true flow is the per-frame shift itself.
// Train and test draw from disjoint random streams.
inline ToyDataset gen_motion_dataset(const ToyDatasetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng base(seed);
  Rng keyed = base.fork(cfg.texture_seed);
  ToyDataset ds;
  ds.train = detail::gen_split(cfg, keyed.fork(1));
  ds.test = detail::gen_split(cfg, keyed.fork(2));
  return ds;
}

// Control experiment: destroys temporal coherence by reassigning every frame
// slot a frame drawn from anywhere in the split. Labels are kept, so any
// accuracy above chance would mean appearance leaks class information.
inline void shuffle_frames_globally(std::vector<VideoSample>& samples, Rng& rng) {
  std::vector<Tensor<double>*> slots;
  for (auto& s : samples)
    for (auto& f : s.frames) slots.push_back(&f);
  for (std::size_t i = slots.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(*slots[i - 1], *slots[j]);
  }
}

}  // namespace repflow::toy
