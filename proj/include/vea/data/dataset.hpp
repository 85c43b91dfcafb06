#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "vea/data/idx.hpp"
#include "vea/tensor.hpp"

namespace vea::data {

struct PreprocessSpec {
  std::size_t height = 0;  // 0 keeps the native size
  std::size_t width = 0;
  std::array<float, 3> mean{0.5f, 0.5f, 0.5f};
  std::array<float, 3> std{0.5f, 0.5f, 0.5f};
  bool replicate_grayscale = true;

  bool resizes() const { return height != 0 || width != 0; }
  void validate() const;
};

/// Random-access source of raw images, each (C,H,W) with values in [0,1]
/// and C of 1 or 3.
class ImageSource {
 public:
  virtual ~ImageSource() = default;
  virtual std::size_t size() const = 0;
  virtual Tensor load(std::size_t index) const = 0;
  virtual std::string describe(std::size_t index) const;
};

/// Bilinear resize of a (C,H,W) image with half-pixel centers.
Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width);

/// Grayscale replication, resize and normalization of one raw image.
Tensor preprocess(const Tensor& raw, const PreprocessSpec& spec);

struct Batch {
  Tensor images;            // (B,3,H,W)
  std::vector<int> labels;  // B
};

/// Labelled images, preprocessed on access.
class Dataset {
 public:
  Dataset(std::shared_ptr<const ImageSource> source, std::vector<int> labels, std::vector<std::string> class_names,
          PreprocessSpec spec);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t num_classes() const noexcept { return class_names_.size(); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }
  const PreprocessSpec& spec() const noexcept { return spec_; }
  /// (3,H,W) of every preprocessed image.
  const Shape& image_shape() const noexcept { return image_shape_; }

  Tensor image(std::size_t index) const;
  Batch gather(const std::vector<std::size_t>& indices) const;

 private:
  std::shared_ptr<const ImageSource> source_;
  std::vector<int> labels_;
  std::vector<std::string> class_names_;
  PreprocessSpec spec_;
  Shape image_shape_;
};

Dataset load_idx_dataset(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                         std::vector<std::string> class_names, PreprocessSpec spec = {});

/// root/<class>/<image>.{png,jpg,jpeg}; classes ordered by sorted directory name.
Dataset load_image_folder(const std::filesystem::path& root, PreprocessSpec spec);

/// Deterministic permutation of 0..n-1, identical on every platform.
std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed);

/// One epoch of batches. Index lists are fixed at construction; images are
/// preprocessed when a batch is requested.
class Batches {
 public:
  Batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed);

  std::size_t size() const noexcept { return plan_.size(); }
  const std::vector<std::size_t>& indices(std::size_t batch) const { return plan_.at(batch); }
  Batch operator[](std::size_t batch) const { return dataset_->gather(plan_.at(batch)); }

 private:
  const Dataset* dataset_;
  std::vector<std::vector<std::size_t>> plan_;
};

Batches make_batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed);

}  // namespace vea::data
