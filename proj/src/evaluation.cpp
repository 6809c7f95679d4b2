#include "graspvq/evaluation.hpp"

#include <cmath>
#include <fstream>

#include "graspvq/checkpoint.hpp"
#include "graspvq/image_io.hpp"
#include "graspvq/training.hpp"

namespace graspvq {
namespace {

Param as_batch(const Tensor<float>& image) {
  if (image.rank() != 3) throw ShapeError("expected a C x H x W image, got " + shape_str(image.shape()));
  return Param::leaf(image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}));
}

}  // namespace

GraspMaps tensor_to_maps(const Tensor<float>& out) {
  if (out.rank() != 4 || out.dim(0) != 1 || out.dim(1) != 4)
    throw ShapeError("expected 1 x 4 x H x W maps, got " + shape_str(out.shape()));
  GraspMaps m(static_cast<int>(out.dim(2)), static_cast<int>(out.dim(3)));
  const std::size_t plane = m.size();
  std::vector<double>* ch[4] = {&m.quality, &m.angle_sin, &m.angle_cos, &m.width_map};
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t i = 0; i < plane; ++i) (*ch[c])[i] = out[static_cast<std::int64_t>(c * plane + i)];
  return m;
}

ProposedPredictor::ProposedPredictor(std::shared_ptr<VqVae> vqvae, std::shared_ptr<GraspHead> head)
    : vqvae_(std::move(vqvae)), head_(std::move(head)) {
  vqvae_->encoder.params().set_trainable(false);
  vqvae_->codebook.embeddings.set_requires_grad(false);
}

GraspMaps ProposedPredictor::predict_maps(const Tensor<float>& image) const {
  return tensor_to_maps(grasp_forward(vqvae_->encoder, vqvae_->codebook, *head_, as_batch(image)).value());
}

BaselinePredictor::BaselinePredictor(NetworkConfig config, std::shared_ptr<BaselineNet> net)
    : config_(std::move(config)), net_(std::move(net)) {}

GraspMaps BaselinePredictor::predict_maps(const Tensor<float>& image) const {
  return tensor_to_maps(net_->forward(as_batch(image)).value());
}

std::unique_ptr<GraspPredictor> load_predictor(const std::filesystem::path& dir) {
  const auto manifest = read_manifest(dir);
  const auto config = NetworkConfig::from_json(manifest.at("config"));
  const std::string phase = manifest.at("metadata").at("phase");
  Rng init(0);
  if (phase == "grasp") {
    auto vqvae = std::make_shared<VqVae>(config, init);
    auto head = std::make_shared<GraspHead>(config, init);
    auto params = grasp_checkpoint_params(*vqvae, *head);
    load_checkpoint(dir, config, params);
    return std::make_unique<ProposedPredictor>(vqvae, head);
  }
  if (phase == "baseline") {
    auto net = std::make_shared<BaselineNet>(config, init);
    auto params = net->params();
    load_checkpoint(dir, config, params);
    return std::make_unique<BaselinePredictor>(config, net);
  }
  throw CheckpointError("checkpoint phase '" + phase + "' cannot predict grasps");
}

nlohmann::json MetricsRecord::to_json() const {
  return {{"labelled_ratio", labelled_ratio}, {"method", method},       {"seed", seed},
          {"test_accuracy", test_accuracy},   {"successes", successes}, {"total", total},
          {"vq_loss_curve", vq_loss_curve},   {"grasp_loss_curve", grasp_loss_curve}, {"status", status}};
}

MetricsRecord evaluate(const GraspPredictor& predictor, const std::vector<Sample>& test, double width_scale,
                       const SuccessCriterion& criterion) {
  if (test.empty()) throw DatasetError("evaluation needs a non-empty test set");
  for (const auto& s : test)
    if (s.positive_rects().empty()) throw DatasetError("test sample " + s.source_id() + " has no grasp labels");
  MetricsRecord r;
  r.total = test.size();
  for (const auto& s : test) {
    const GraspRectangle g = maps_to_grasp(predictor.predict_maps(s.image()), width_scale);
    if (is_success(g, s.positive_rects(), criterion)) ++r.successes;
  }
  r.test_accuracy = static_cast<double>(r.successes) / static_cast<double>(r.total);
  return r;
}

PredictionOutput predict(const GraspPredictor& predictor, const std::filesystem::path& image_path,
                         const std::filesystem::path& output_dir, double width_scale) {
  Tensor<float> raw;
  try {
    raw = load_image(image_path, predictor.input_channels());
  } catch (const ImageError& e) {
    throw DatasetError(e.what());
  }
  const Tensor<float> image = crop_resize_image(raw, predictor.input_size());
  const GraspMaps maps = predictor.predict_maps(image);
  const GraspRectangle g = maps_to_grasp(maps, width_scale);

  std::filesystem::create_directories(output_dir);
  std::vector<double> angle(maps.size()), width(maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) {
    angle[i] = 0.5 * std::atan2(maps.angle_sin[i], maps.angle_cos[i]);
    width[i] = maps.width_map[i] * width_scale;
  }
  const ColorScale qs = save_heatmap(output_dir / "quality.png", maps.quality, maps.height, maps.width);
  const ColorScale as = save_heatmap(output_dir / "angle.png", angle, maps.height, maps.width);
  const ColorScale ws = save_heatmap(output_dir / "width.png", width, maps.height, maps.width);
  save_annotated(output_dir / "annotated.png", image, g);
  {
    std::ofstream out(output_dir / "raw_maps.bin", std::ios::binary);
    for (const auto* ch : {&maps.quality, &maps.angle_sin, &maps.angle_cos, &maps.width_map})
      out.write(reinterpret_cast<const char*>(ch->data()), static_cast<std::streamsize>(ch->size() * sizeof(double)));
  }

  PredictionOutput result;
  result.grasp = g;
  result.json = {{"center_row", g.center_row}, {"center_col", g.center_col}, {"angle", g.angle},
                 {"width", g.width},           {"quality", g.quality}};
  auto scale_json = [](const ColorScale& s, const char* unit) {
    return nlohmann::json{{"colormap", "jet"}, {"blue", s.min}, {"red", s.max}, {"unit", unit}};
  };
  const nlohmann::json meta = {{"image", image_path.string()},
                               {"height", maps.height},
                               {"width", maps.width},
                               {"width_scale", width_scale},
                               {"grasp", result.json},
                               {"raw_maps", {{"file", "raw_maps.bin"}, {"dtype", "float64 little-endian"},
                                             {"planes", {"quality", "angle_sin", "angle_cos", "width"}}}},
                               {"color_scales",
                                {{"quality.png", scale_json(qs, "quality")},
                                 {"angle.png", scale_json(as, "radians")},
                                 {"width.png", scale_json(ws, "pixels")}}}};
  std::ofstream(output_dir / "prediction.json") << meta.dump(2) << '\n';
  return result;
}

GraspMaps read_raw_maps(const std::filesystem::path& path, int height, int width) {
  GraspMaps m(height, width);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + path.string());
  for (auto* ch : {&m.quality, &m.angle_sin, &m.angle_cos, &m.width_map})
    in.read(reinterpret_cast<char*>(ch->data()), static_cast<std::streamsize>(ch->size() * sizeof(double)));
  if (!in) throw DatasetError("truncated raw maps " + path.string());
  return m;
}

}  // namespace graspvq
