#include "atbseg/dataset.hpp"

#include <algorithm>

#include "atbseg/rasterize.hpp"

namespace atbseg {

Dataset labeled_frames(const VideoClip& clip, std::size_t first, long count) {
  Dataset out;
  const std::size_t end =
      count < 0 ? clip.frames.size() : std::min(clip.frames.size(), first + static_cast<std::size_t>(count));
  for (std::size_t i = first; i < end; ++i) {
    const auto& f = clip.frames[i];
    LabeledFrame lf;
    lf.image = f.pixels;
    lf.masks = masks_from_contours(clip.annotations[i], f.pixels.width, f.pixels.height);
    lf.subject = f.subject;
    lf.video_index = f.video_index;
    lf.frame_index = f.frame_index;
    out.push_back(std::move(lf));
  }
  return out;
}

void append(Dataset& into, const Dataset& more) { into.insert(into.end(), more.begin(), more.end()); }

PreparedSet prepare(const Dataset& data, int width, int height) {
  PreparedSet set;
  const int n = static_cast<int>(data.size());
  set.images = nn::Tensor4<float>(n, 1, height, width);
  set.targets = nn::Tensor4<float>(n, 3, height, width);
  for (int i = 0; i < n; ++i) {
    const auto img = resize_frame(data[i].image, width, height);
    std::copy(img.values.begin(), img.values.end(), set.images.sample(i));
    for (int m = 0; m < 3; ++m) {
      const auto mask = resize_mask(data[i].masks[m], width, height);
      std::copy(mask.values.begin(), mask.values.end(), set.targets.channel(i, m));
    }
  }
  return set;
}

PreparedSet gather(const PreparedSet& set, std::span<const int> indices) {
  PreparedSet out;
  const int n = static_cast<int>(indices.size());
  out.images = nn::Tensor4<float>(n, 1, set.images.h, set.images.w);
  out.targets = nn::Tensor4<float>(n, 3, set.targets.h, set.targets.w);
  for (int i = 0; i < n; ++i) {
    const int src = indices[i];
    std::copy(set.images.sample(src), set.images.sample(src) + set.images.sample_size(), out.images.sample(i));
    std::copy(set.targets.sample(src), set.targets.sample(src) + set.targets.sample_size(), out.targets.sample(i));
  }
  return out;
}

}  // namespace atbseg
