#include "vea/data/dataset.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>

namespace vea::data {

namespace fs = std::filesystem;

void PreprocessSpec::validate() const {
  if ((height == 0) != (width == 0)) throw std::invalid_argument("resize target needs both height and width");
  for (float s : std) {
    if (!(s > 0.0f)) throw std::invalid_argument("normalization std must be positive");
  }
}

std::string ImageSource::describe(std::size_t index) const { return "image " + std::to_string(index); }

namespace {

struct AxisTap {
  std::size_t lo, hi;
  double frac;
};

std::vector<AxisTap> axis_taps(std::size_t in, std::size_t out) {
  std::vector<AxisTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double s = (static_cast<double>(o) + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(s));
    taps[o] = {lo, std::min(lo + 1, in - 1), s - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
  if (image.rank() != 3) throw ShapeError("resize_bilinear: expected (C,H,W), got " + shape_to_string(image.shape()));
  if (height == 0 || width == 0) throw std::invalid_argument("resize_bilinear: target size must be positive");
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (h == height && w == width) return image;

  const auto ytaps = axis_taps(h, height);
  const auto xtaps = axis_taps(w, width);
  Tensor out({c, height, width});
  std::vector<double> rows(h * width);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = image.raw() + ch * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const auto& t = xtaps[x];
        rows[y * width + x] = (1.0 - t.frac) * src[y * w + t.lo] + t.frac * src[y * w + t.hi];
      }
    }
    float* dst = out.raw() + ch * height * width;
    for (std::size_t y = 0; y < height; ++y) {
      const auto& t = ytaps[y];
      for (std::size_t x = 0; x < width; ++x) {
        dst[y * width + x] =
            static_cast<float>((1.0 - t.frac) * rows[t.lo * width + x] + t.frac * rows[t.hi * width + x]);
      }
    }
  }
  return out;
}

Tensor preprocess(const Tensor& raw, const PreprocessSpec& spec) {
  if (raw.rank() != 3 || (raw.dim(0) != 1 && raw.dim(0) != 3)) {
    throw ShapeError("preprocess: expected (1,H,W) or (3,H,W), got " + shape_to_string(raw.shape()));
  }
  Tensor rgb = raw;
  if (raw.dim(0) == 1) {
    if (!spec.replicate_grayscale) throw DataError("grayscale image but channel replication is disabled");
    const std::size_t plane = raw.dim(1) * raw.dim(2);
    rgb = Tensor({3, raw.dim(1), raw.dim(2)});
    for (std::size_t ch = 0; ch < 3; ++ch) std::copy(raw.raw(), raw.raw() + plane, rgb.raw() + ch * plane);
  }
  if (spec.resizes()) rgb = resize_bilinear(rgb, spec.height, spec.width);
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    float* p = rgb.raw() + ch * plane;
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - spec.mean[ch]) / spec.std[ch];
  }
  return rgb;
}

Dataset::Dataset(std::shared_ptr<const ImageSource> source, std::vector<int> labels,
                 std::vector<std::string> class_names, PreprocessSpec spec)
    : source_(std::move(source)), labels_(std::move(labels)), class_names_(std::move(class_names)), spec_(spec) {
  spec_.validate();
  if (!source_ || source_->size() == 0) throw DataError("dataset is empty");
  if (source_->size() != labels_.size()) {
    throw DataError("dataset has " + std::to_string(source_->size()) + " images but " +
                    std::to_string(labels_.size()) + " labels");
  }
  if (class_names_.empty()) throw DataError("dataset has no classes");
  const int k = static_cast<int>(class_names_.size());
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] < 0 || labels_[i] >= k) {
      throw DataError("label " + std::to_string(labels_[i]) + " of sample " + std::to_string(i) + " is outside [0," +
                      std::to_string(k) + ")");
    }
  }
  image_shape_ = preprocess(source_->load(0), spec_).shape();
}

Tensor Dataset::image(std::size_t index) const {
  if (index >= size()) throw std::out_of_range("sample " + std::to_string(index) + " out of range");
  Tensor img = preprocess(source_->load(index), spec_);
  if (img.shape() != image_shape_) {
    throw DataError(source_->describe(index) + " has shape " + shape_to_string(img.shape()) + ", expected " +
                    shape_to_string(image_shape_));
  }
  return img;
}

Batch Dataset::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("cannot gather an empty batch");
  Shape shape{indices.size()};
  shape.insert(shape.end(), image_shape_.begin(), image_shape_.end());
  Batch batch{Tensor(shape), {}};
  const std::size_t stride = shape_numel(image_shape_);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const Tensor img = image(indices[b]);
    std::copy(img.raw(), img.raw() + stride, batch.images.raw() + b * stride);
    batch.labels.push_back(labels_[indices[b]]);
  }
  return batch;
}

namespace {

class IdxImageSource final : public ImageSource {
 public:
  explicit IdxImageSource(IdxArray array) : array_(std::move(array)) {
    plane_ = static_cast<std::size_t>(array_.dims[1]) * array_.dims[2];
  }
  std::size_t size() const override { return array_.dims[0]; }
  Tensor load(std::size_t index) const override {
    Tensor img({1, array_.dims[1], array_.dims[2]});
    const std::uint8_t* src = array_.payload.data() + index * plane_;
    for (std::size_t i = 0; i < plane_; ++i) img[i] = static_cast<float>(src[i]) / 255.0f;
    return img;
  }

 private:
  IdxArray array_;
  std::size_t plane_;
};

class FileImageSource final : public ImageSource {
 public:
  explicit FileImageSource(std::vector<fs::path> files) : files_(std::move(files)) {}
  std::size_t size() const override { return files_.size(); }
  std::string describe(std::size_t index) const override { return files_.at(index).string(); }
  Tensor load(std::size_t index) const override {
    const cv::Mat bgr = cv::imread(files_.at(index).string(), cv::IMREAD_COLOR);
    if (bgr.empty()) throw DataError("cannot decode " + files_[index].string());
    const auto h = static_cast<std::size_t>(bgr.rows), w = static_cast<std::size_t>(bgr.cols);
    Tensor img({3, h, w});
    for (std::size_t y = 0; y < h; ++y) {
      const auto* row = bgr.ptr<cv::Vec3b>(static_cast<int>(y));
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t ch = 0; ch < 3; ++ch) img[(ch * h + y) * w + x] = row[x][2 - ch] / 255.0f;
      }
    }
    return img;
  }

 private:
  std::vector<fs::path> files_;
};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace

Dataset load_idx_dataset(const fs::path& images_path, const fs::path& labels_path,
                         std::vector<std::string> class_names, PreprocessSpec spec) {
  IdxArray images = load_idx_file(images_path);
  const IdxArray labels = load_idx_file(labels_path);
  if (images.dtype != IdxDtype::U8 || images.dims.size() != 3) {
    throw DataError(images_path.string() + ": expected u8 images with dims [N,H,W]");
  }
  if (labels.dims.size() != 1) throw DataError(labels_path.string() + ": expected labels with dims [N]");
  if (labels.dtype == IdxDtype::F32 || labels.dtype == IdxDtype::F64) {
    throw DataError(labels_path.string() + ": labels must be integers");
  }
  if (images.dims[0] != labels.dims[0]) {
    throw DataError("image count " + std::to_string(images.dims[0]) + " does not match label count " +
                    std::to_string(labels.dims[0]));
  }
  if (images.dims[1] == 0 || images.dims[2] == 0) throw DataError(images_path.string() + ": zero-sized images");
  std::vector<int> y(labels.count());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(labels.value(i));
  auto source = std::make_shared<IdxImageSource>(std::move(images));
  return Dataset(std::move(source), std::move(y), std::move(class_names), spec);
}

Dataset load_image_folder(const fs::path& root, PreprocessSpec spec) {
  if (!fs::is_directory(root)) throw DataError(root.string() + " is not a directory");
  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
  if (class_dirs.empty()) throw DataError(root.string() + " has no class directories");

  std::vector<fs::path> files;
  std::vector<int> labels;
  std::vector<std::string> names;
  for (const auto& dir : class_dirs) {
    std::vector<fs::path> images;
    for (const auto& entry : fs::directory_iterator(dir)) {
      if (entry.is_regular_file() && is_image_file(entry.path())) images.push_back(entry.path());
    }
    if (images.empty()) throw DataError("class directory " + dir.string() + " contains no images");
    std::sort(images.begin(), images.end());
    for (auto& p : images) {
      files.push_back(std::move(p));
      labels.push_back(static_cast<int>(names.size()));
    }
    names.push_back(dir.filename().string());
  }
  return Dataset(std::make_shared<FileImageSource>(std::move(files)), std::move(labels), std::move(names), spec);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  // unbiased draw from [0, range) by rejecting the short final bucket
  auto draw = [&rng](std::uint64_t range) {
    const std::uint64_t threshold = (0 - range) % range;
    std::uint64_t r = 0;
    do r = rng(); while (r < threshold);
    return r % range;
  };
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[draw(i)]);
  return order;
}

Batches::Batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed)
    : dataset_(&dataset) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be at least 1");
  std::vector<std::size_t> order;
  if (shuffle) {
    order = shuffled_indices(dataset.size(), seed);
  } else {
    order.resize(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  }
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(start + batch_size, order.size());
    plan_.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                       order.begin() + static_cast<std::ptrdiff_t>(end));
  }
}

Batches make_batches(const Dataset& dataset, std::size_t batch_size, bool shuffle, std::uint64_t seed) {
  return Batches(dataset, batch_size, shuffle, seed);
}

}  // namespace vea::data
