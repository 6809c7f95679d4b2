#include "graspvq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <numbers>
#include <regex>
#include <sstream>

#include "graspvq/image_io.hpp"
#include "graspvq/rng.hpp"

namespace graspvq {
namespace {

constexpr double kPi = std::numbers::pi;

std::size_t rounded(double x) { return static_cast<std::size_t>(std::llround(x)); }

}  // namespace

Sample::Sample(std::string source_id, Tensor<float> image, std::vector<GraspRectangle> rects)
    : source_id_(std::move(source_id)), image_(std::move(image)), rects_(std::move(rects)) {
  if (image_.rank() != 3) {
    throw DatasetError("sample " + source_id_ + ": image must be C x H x W, got " +
                       shape_str(image_.shape()));
  }
  for (float v : image_.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw DatasetError("sample " + source_id_ + ": image values must lie in [0, 1]");
    }
  }
}

// ---- Cornell ---------------------------------------------------------------

CropResize CropResize::for_image(int height, int width, int target) {
  const int side = std::min(height, width);
  CropResize t;
  t.offset_x = static_cast<double>((width - side) / 2);
  t.offset_y = static_cast<double>((height - side) / 2);
  t.scale = static_cast<double>(target) / side;
  return t;
}

Point CropResize::apply(Point p) const {
  // Pixel centres sit at integer coordinates; resizing maps centre to centre.
  return {(p.x - offset_x + 0.5) * scale - 0.5, (p.y - offset_y + 0.5) * scale - 0.5};
}

Tensor<float> crop_resize_image(const Tensor<float>& chw, int target) {
  const int channels = static_cast<int>(chw.dim(0));
  const int h = static_cast<int>(chw.dim(1)), w = static_cast<int>(chw.dim(2));
  const int side = std::min(h, w);
  const CropResize t = CropResize::for_image(h, w, target);
  const int oy = static_cast<int>(t.offset_y), ox = static_cast<int>(t.offset_x);
  Tensor<float> cropped({channels, side, side});
  for (int k = 0; k < channels; ++k)
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c)
        cropped[(static_cast<std::int64_t>(k) * side + r) * side + c] =
            chw[(static_cast<std::int64_t>(k) * h + r + oy) * w + c + ox];
  return resize_image(cropped, target, target);
}

std::vector<GraspRectangle> parse_cornell_rectangles(std::istream& in, std::size_t* skipped) {
  std::vector<Point> points;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string xs, ys;
    if (!(ls >> xs)) continue;  // blank line
    if (!(ls >> ys)) throw DatasetError("malformed rectangle line: '" + line + "'");
    points.push_back({std::strtod(xs.c_str(), nullptr), std::strtod(ys.c_str(), nullptr)});
  }
  if (points.size() % 4 != 0) {
    throw DatasetError("rectangle file has " + std::to_string(points.size()) +
                       " points, not a multiple of 4");
  }
  std::vector<GraspRectangle> rects;
  for (std::size_t i = 0; i < points.size(); i += 4) {
    try {
      rects.push_back(parse_rectangle(std::span<const Point, 4>(points.data() + i, 4)));
    } catch (const RejectedRectangle&) {
      if (skipped) ++*skipped;
    }
  }
  return rects;
}

std::vector<Sample> load_cornell(const std::filesystem::path& directory, int image_size,
                                 CornellLoadReport* report) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(directory)) throw DatasetError("not a directory: " + directory.string());
  const std::regex name(R"(pcd(\d{4})r\.png)");
  std::map<std::string, fs::path> images;
  for (const auto& entry : fs::recursive_directory_iterator(directory)) {
    std::smatch m;
    const std::string file = entry.path().filename().string();
    if (entry.is_regular_file() && std::regex_match(file, m, name)) images[m[1]] = entry.path();
  }

  CornellLoadReport local;
  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (const auto& [id, image_path] : images) {
    const fs::path rect_path = image_path.parent_path() / ("pcd" + id + "cpos.txt");
    std::ifstream in(rect_path);
    if (!in) throw DatasetError("missing rectangle file " + rect_path.string());
    std::vector<GraspRectangle> raw;
    try {
      raw = parse_cornell_rectangles(in, &local.skipped_rectangles);
    } catch (const DatasetError& e) {
      throw DatasetError(rect_path.string() + ": " + e.what());
    }

    Tensor<float> image;
    try {
      image = load_image(image_path, 3);
    } catch (const ImageError& e) {
      throw DatasetError(e.what());
    }
    const CropResize t =
        CropResize::for_image(static_cast<int>(image.dim(1)), static_cast<int>(image.dim(2)), image_size);
    std::vector<GraspRectangle> rects;
    for (const auto& r : raw) {
      auto corners = r.corners();
      for (auto& p : corners) p = t.apply(p);
      rects.push_back(parse_rectangle(corners));
    }
    local.rectangles += rects.size();
    ++local.images;
    samples.emplace_back("pcd" + id, crop_resize_image(image, image_size), std::move(rects));
  }
  if (local.skipped_rectangles > 0) {
    std::cerr << "load_cornell: skipped " << local.skipped_rectangles << " invalid rectangles\n";
  }
  if (report) *report = local;
  return samples;
}

// ---- Splitting -------------------------------------------------------------

DatasetSplit split(std::vector<Sample> samples, double test_fraction, double labelled_ratio,
                   std::uint64_t seed, const SplitOptions& options) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw DatasetError("test_fraction must lie in (0, 1)");
  }
  if (!(labelled_ratio > 0.0 && labelled_ratio <= 1.0)) {
    throw DatasetError("labelled_ratio must lie in (0, 1]");
  }
  const std::size_t n = samples.size();

  // Shuffle groups of sample indices; image-wise splitting uses singletons.
  std::vector<std::vector<std::size_t>> groups;
  if (options.group_key) {
    std::map<std::string, std::size_t> slot;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, fresh] = slot.emplace(options.group_key(samples[i]), groups.size());
      if (fresh) groups.emplace_back();
      groups[it->second].push_back(i);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
  }
  Rng rng(seed);
  rng.shuffle(groups);

  const std::size_t n_test = rounded(test_fraction * static_cast<double>(n));
  std::size_t g = 0;
  std::vector<std::size_t> test_idx, train_idx;
  while (g < groups.size() && test_idx.size() < n_test) {
    test_idx.insert(test_idx.end(), groups[g].begin(), groups[g].end());
    ++g;
  }
  const std::size_t train_groups_begin = g;
  std::size_t n_train = 0;
  for (std::size_t k = g; k < groups.size(); ++k) n_train += groups[k].size();
  const std::size_t n_labelled = rounded(labelled_ratio * static_cast<double>(n_train));

  std::vector<std::size_t> labelled_idx, unlabelled_idx;
  for (g = train_groups_begin; g < groups.size(); ++g) {
    auto& dst = labelled_idx.size() < n_labelled ? labelled_idx : unlabelled_idx;
    dst.insert(dst.end(), groups[g].begin(), groups[g].end());
  }

  if (test_idx.empty()) throw DatasetError("split leaves the test set empty");
  if (labelled_idx.empty()) throw DatasetError("split leaves the labelled set empty");
  if (unlabelled_idx.empty() && labelled_ratio < 1.0) {
    throw DatasetError("split leaves the unlabelled set empty at labelled_ratio < 1");
  }

  DatasetSplit out;
  out.seed = seed;
  out.labelled_ratio = labelled_ratio;
  out.test_fraction = test_fraction;
  auto take = [&samples](const std::vector<std::size_t>& idx, std::vector<Sample>& dst) {
    dst.reserve(idx.size());
    for (std::size_t i : idx) dst.push_back(std::move(samples[i]));
  };
  take(test_idx, out.test);
  take(labelled_idx, out.labelled);
  take(unlabelled_idx, out.unlabelled);
  return out;
}

// ---- Augmentation ------------------------------------------------------------

Tensor<float> transform_image(const Tensor<float>& chw, int quarter_turns, bool flip) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  const std::int64_t channels = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
  if (turns % 2 == 1 && h != w) throw DatasetError("quarter-turn rotation needs a square image");
  Tensor<float> out(chw.shape());
  for (std::int64_t k = 0; k < channels; ++k) {
    const float* src = chw.data() + k * h * w;
    float* dst = out.data() + k * h * w;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        // Destination of source pixel (x, y) under the rotation, then mirror.
        std::int64_t nx = x, ny = y;
        for (int t = 0; t < turns; ++t) {
          const std::int64_t tx = (w - 1) - ny;
          ny = nx;
          nx = tx;
        }
        if (flip) nx = (w - 1) - nx;
        dst[ny * w + nx] = src[y * w + x];
      }
    }
  }
  return out;
}

std::vector<GraspRectangle> transform_rectangles(std::span<const GraspRectangle> rects, int height,
                                                 int width, int quarter_turns, bool flip) {
  const int turns = ((quarter_turns % 4) + 4) % 4;
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  std::vector<GraspRectangle> out;
  for (const auto& rect : rects) {
    auto corners = rect.corners();
    for (auto& p : corners) {
      for (int t = 0; t < turns; ++t) p = {cx - (p.y - cy), cy + (p.x - cx)};
      if (flip) p.x = (width - 1) - p.x;
    }
    GraspRectangle moved = parse_rectangle(corners);
    moved.quality = rect.quality;
    if (moved.center_row < 0.0 || moved.center_row > height - 1 || moved.center_col < 0.0 ||
        moved.center_col > width - 1) {
      continue;
    }
    out.push_back(moved);
  }
  return out;
}

Sample augment(const Sample& sample, double rotation, bool flip) {
  const double turns_real = rotation / (kPi / 2.0);
  const double nearest = std::round(turns_real);
  if (std::abs(turns_real - nearest) > 1e-9) {
    throw DatasetError("augment supports right-angle rotations only");
  }
  const int turns = static_cast<int>(nearest);
  const Tensor<float>& image = sample.image();
  return Sample(sample.source_id(), transform_image(image, turns, flip),
                transform_rectangles(sample.positive_rects(), sample.height(), sample.width(), turns,
                                     flip));
}

AugmentChoice draw_augmentation(std::uint64_t seed) {
  Rng rng(seed);
  const auto pick = rng.below(8);
  return {static_cast<int>(pick % 4), pick >= 4};
}

// ---- Synthetic bars ------------------------------------------------------

std::vector<SyntheticSample> synth_generate_detailed(int n, int image_size, std::uint64_t seed) {
  if (n <= 0) throw DatasetError("synth_generate: n must be positive");
  if (image_size < 32) throw DatasetError("synth_generate: image_size must be at least 32");
  const double s = image_size;
  Rng rng(seed);
  std::vector<SyntheticSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SyntheticParams p;
    p.length = rng.uniform(0.3 * s, 0.5 * s);
    p.thickness = rng.uniform(0.08 * s, 0.14 * s);
    p.bar_angle = rng.uniform(-kPi / 2, kPi / 2);
    const double reach = p.length / 2.0 + 2.0;
    p.center_row = rng.uniform(reach, s - 1.0 - reach);
    p.center_col = rng.uniform(reach, s - 1.0 - reach);
    p.foreground = rng.uniform(0.6, 0.95);
    p.background = rng.uniform(0.05, 0.2);

    const double ux = std::cos(p.bar_angle), uy = std::sin(p.bar_angle);
    Tensor<float> image({1, image_size, image_size});
    for (int r = 0; r < image_size; ++r) {
      for (int c = 0; c < image_size; ++c) {
        int covered = 0;
        for (int sy = -1; sy <= 1; ++sy) {
          for (int sx = -1; sx <= 1; ++sx) {
            const double dx = c + sx / 3.0 - p.center_col, dy = r + sy / 3.0 - p.center_row;
            const double along = dx * ux + dy * uy, across = -dx * uy + dy * ux;
            covered += std::abs(along) <= p.length / 2 && std::abs(across) <= p.thickness / 2;
          }
        }
        const double v = p.background + (p.foreground - p.background) * covered / 9.0 +
                         0.02 * rng.normal();
        image[static_cast<std::int64_t>(r) * image_size + c] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
    const double width = p.thickness + 0.1 * s;
    GraspRectangle rect =
        make_rectangle(p.center_row, p.center_col, p.bar_angle + kPi / 2, width, width / 2.0);
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05d", i);
    out.push_back({Sample(id, std::move(image), {rect}), p});
  }
  return out;
}

std::vector<Sample> synth_generate(int n, int image_size, std::uint64_t seed) {
  std::vector<Sample> out;
  for (auto& s : synth_generate_detailed(n, image_size, seed)) out.push_back(std::move(s.sample));
  return out;
}

void write_synthetic(const std::filesystem::path& directory,
                     const std::vector<SyntheticSample>& samples) {
  std::filesystem::create_directories(directory);
  std::ofstream index(directory / "index.jsonl");
  if (!index) throw DatasetError("cannot write " + (directory / "index.jsonl").string());
  for (const auto& s : samples) {
    const std::string file = s.sample.source_id() + ".png";
    save_image(directory / file, s.sample.image());
    nlohmann::json corners = nlohmann::json::array();
    for (const auto& rect : s.sample.positive_rects()) {
      for (const Point& p : rect.corners()) corners.push_back({p.x, p.y});
    }
    const auto& p = s.params;
    nlohmann::json rec = {{"source_id", s.sample.source_id()},
                          {"image", file},
                          {"corners", corners},
                          {"params",
                           {{"center_row", p.center_row},
                            {"center_col", p.center_col},
                            {"bar_angle", p.bar_angle},
                            {"length", p.length},
                            {"thickness", p.thickness},
                            {"foreground", p.foreground},
                            {"background", p.background}}}};
    index << rec.dump() << '\n';
  }
}

std::vector<Sample> read_synthetic(const std::filesystem::path& directory) {
  std::ifstream index(directory / "index.jsonl");
  if (!index) throw DatasetError("missing " + (directory / "index.jsonl").string());
  std::vector<Sample> out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    std::vector<Point> pts;
    for (const auto& xy : rec.at("corners")) pts.push_back({xy.at(0).get<double>(), xy.at(1).get<double>()});
    if (pts.size() % 4 != 0) throw DatasetError("index record with a partial corner list");
    std::vector<GraspRectangle> rects;
    for (std::size_t i = 0; i < pts.size(); i += 4) {
      rects.push_back(parse_rectangle(std::span<const Point, 4>(pts.data() + i, 4)));
    }
    Tensor<float> image;
    try {
      image = load_image(directory / rec.at("image").get<std::string>(), 1);
    } catch (const ImageError& e) {
      throw DatasetError(e.what());
    }
    out.emplace_back(rec.at("source_id").get<std::string>(), std::move(image), std::move(rects));
  }
  return out;
}

}  // namespace graspvq
