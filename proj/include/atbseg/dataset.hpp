#pragma once

#include <span>
#include <string>
#include <vector>

#include "atbseg/corpus.hpp"
#include "atbseg/tensor.hpp"

namespace atbseg {

/// A frame paired with its ground-truth masks, both at native resolution.
struct LabeledFrame {
  ImageGrid image;
  MaskTriple masks;
  std::string subject;
  int video_index = 0;
  int frame_index = 0;
};

using Dataset = std::vector<LabeledFrame>;

/// Rasterizes frames [first, first + count) of a clip; count < 0 means "to the end".
Dataset labeled_frames(const VideoClip& clip, std::size_t first = 0, long count = -1);

void append(Dataset& into, const Dataset& more);

/// Tensors at a model's input dims: frames resampled bilinearly, masks
/// rasterized natively then resampled nearest.
struct PreparedSet {
  nn::Tensor4<float> images;   // [N,1,H,W]
  nn::Tensor4<float> targets;  // [N,3,H,W]
  std::size_t size() const { return static_cast<std::size_t>(images.n); }
};

PreparedSet prepare(const Dataset& data, int width, int height);

/// Copies the listed samples of a prepared set into a batch.
PreparedSet gather(const PreparedSet& set, std::span<const int> indices);

}  // namespace atbseg
