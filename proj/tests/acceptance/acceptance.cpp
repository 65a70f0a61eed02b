// Acceptance suite: one PASS/FAIL line per criterion. Criteria 5-8 share one
// training run on five rendered fold sequences at desk-scale widths.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "../test_util.hpp"
#include "gtrack/experiment.hpp"
#include "gtrack/fusion.hpp"
#include "gtrack/metrics.hpp"
#include "gtrack/nocs.hpp"
#include "gtrack/refiner.hpp"
#include "gtrack/tensor_util.hpp"
#include "gtrack/warpfield.hpp"

using namespace gtrack;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// --- 1: oracle equivalence --------------------------------------------------

double sq(const PointMatrix& a, Eigen::Index i, const PointMatrix& b, Eigen::Index j) {
  double s = 0.0;
  for (int k = 0; k < 3; ++k) {
    const double d = static_cast<double>(a(i, k)) - b(j, k);
    s += d * d;
  }
  return s;
}

double mean_nn(const PointMatrix& from, const PointMatrix& to) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < to.rows(); ++j) best = std::min(best, sq(from, i, to, j));
    sum += std::sqrt(best);
  }
  return sum / static_cast<double>(from.rows());
}

double oracle_chamfer_cm(const PointMatrix& a, const PointMatrix& b) {
  return 100.0 * 0.5 * (mean_nn(a, b) + mean_nn(b, a));
}

double oracle_d_corr_cm(const PointMatrix& pp, const PointMatrix& pn, const PointMatrix& gp, const PointMatrix& gn) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < pp.rows(); ++i) {
    Eigen::Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < gn.rows(); ++j) {
      const double d = sq(pn, i, gn, j);
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    sum += std::sqrt(sq(pp, i, gp, best));
  }
  return 100.0 * sum / static_cast<double>(pp.rows());
}

Outcome criterion_1() {
  Outcome o;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  int scatter_ok = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t g = std::array<int64_t, 3>{4, 8, 16}[trial % 3];
    const int64_t n = std::uniform_int_distribution<int64_t>(1, 1000)(rng);
    const int64_t c = std::uniform_int_distribution<int64_t>(1, 6)(rng);
    torch::manual_seed(trial);
    auto f = torch::randn({1, n, c});
    auto p = torch::rand({1, n, 3});
    auto v = scatter_max(f, p, g);
    // Per-cell max by a plain loop.
    std::vector<float> vol(static_cast<size_t>(c * g * g * g), 0.0F);
    std::vector<bool> hit(static_cast<size_t>(g * g * g), false);
    auto fa = f.accessor<float, 3>();
    auto pa = p.accessor<float, 3>();
    for (int64_t i = 0; i < n; ++i) {
      int64_t idx[3];
      for (int a = 0; a < 3; ++a) {
        idx[a] = std::min<int64_t>(static_cast<int64_t>(std::floor(static_cast<double>(pa[0][i][a]) * g)), g - 1);
      }
      const int64_t cell = (idx[0] * g + idx[1]) * g + idx[2];
      for (int64_t k = 0; k < c; ++k) {
        float& slot = vol[static_cast<size_t>(k * g * g * g + cell)];
        slot = hit[cell] ? std::max(slot, fa[0][i][k]) : fa[0][i][k];
      }
      hit[cell] = true;
    }
    auto expected = torch::from_blob(vol.data(), {1, c, g, g, g}, torch::kFloat32).clone();
    std::vector<uint8_t> hit_bytes(hit.begin(), hit.end());
    auto mask = torch::from_blob(hit_bytes.data(), {1, g, g, g}, torch::kUInt8).to(torch::kBool);
    if (torch::equal(v.volume, expected) && torch::equal(v.mask, mask)) ++scatter_ok;
  }
  int metric_ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto n = std::uniform_int_distribution<Eigen::Index>(1, 200)(rng);
    const auto m = std::uniform_int_distribution<Eigen::Index>(1, 200)(rng);
    auto a = testing::random_points(n, rng, -0.3F, 0.3F);
    auto b = testing::random_points(m, rng, -0.3F, 0.3F);
    auto an = testing::random_points(n, rng);
    auto bn = testing::random_points(m, rng);
    const bool ch = eval::chamfer_cm(a, b) == oracle_chamfer_cm(a, b);
    const bool co = eval::d_corr_cm(a, an, b, bn) == oracle_d_corr_cm(a, an, b, bn);
    if (ch && co) ++metric_ok;
  }
  const double secs = seconds_since(t0);
  o.detail << "scatter-max " << scatter_ok << "/200 exact, chamfer+d_corr " << metric_ok << "/100 exact, "
           << std::fixed << std::setprecision(1) << secs << " s";
  o.require(scatter_ok == 200, "scatter-max");
  o.require(metric_ok == 100, "metrics");
  o.require(secs < 60.0, "runtime < 1 min");
  return o;
}

// --- 2: NOCS math -----------------------------------------------------------

Outcome criterion_2() {
  Outcome o;
  std::mt19937_64 rng(202);
  auto coords = testing::random_points(100000, rng);
  auto bins = nocs::to_bins(coords, 64);
  auto decoded = nocs::bins_to_nocs(nocs::one_hot_logits(bins, 64));
  const double worst = (decoded - coords).cwiseAbs().maxCoeff();
  o.detail << "bin round trip max error " << std::setprecision(6) << worst << " (bound " << 1.0 / 128.0 << ")";
  o.require(worst <= 1.0 / 128.0, "round trip");

  const double deltas[3] = {0.05, 0.10, 0.15};
  const double s_lo[3] = {0.8, 0.6, 0.4};
  const double o_hi[3] = {0.1, 0.2, 0.3};
  auto input = testing::random_points(2000, rng);
  // Push some coordinates onto the faces so clamping is exercised.
  for (Eigen::Index i = 0; i < 200; ++i) input(i, i % 3) = (i % 2 == 0) ? 0.0F : 1.0F;
  bool all_ok = true;
  for (int level = 1; level <= 3; ++level) {
    auto p = nocs::NoiseParams::for_level(static_cast<nocs::NoiseLevel>(level));
    bool table = p.delta == deltas[level - 1];
    for (int a = 0; a < 3; ++a) {
      table = table && p.s_pc[a].lo == s_lo[level - 1] && p.s_pc[a].hi == 2.0 - s_lo[level - 1] &&
              p.o_pc[a].lo == 0.0 && p.o_pc[a].hi == o_hi[level - 1] && p.s_mesh[a].lo == s_lo[level - 1] &&
              p.s_mesh[a].hi == 2.0 - s_lo[level - 1];
    }
    auto first = nocs::perturb_nocs(input, p, 7);
    auto again = nocs::perturb_nocs(input, p, 7);
    auto other = nocs::perturb_nocs(input, p, 8);
    // Independent replay of clamp(c * s + o + eps).
    std::mt19937_64 r(7);
    std::array<double, 3> s{};
    std::array<double, 3> off{};
    for (int a = 0; a < 3; ++a) s[a] = std::uniform_real_distribution<double>(p.s_pc[a].lo, p.s_pc[a].hi)(r);
    for (int a = 0; a < 3; ++a) off[a] = std::uniform_real_distribution<double>(p.o_pc[a].lo, p.o_pc[a].hi)(r);
    std::normal_distribution<double> eps(0.0, p.delta);
    PointMatrix replay(input.rows(), 3);
    for (Eigen::Index i = 0; i < input.rows(); ++i) {
      for (int a = 0; a < 3; ++a) {
        const double v = static_cast<double>(input(i, a)) * s[a] + off[a] + eps(r);
        replay(i, a) = static_cast<float>(std::min(1.0, std::max(0.0, v)));
      }
    }
    const bool clamped = first.minCoeff() >= 0.0F && first.maxCoeff() <= 1.0F;
    const bool hits_faces = (first.array() == 0.0F).any() && (first.array() == 1.0F).any();
    const bool ok = table && first == again && !(first == other) && first == replay && clamped && hits_faces;
    o.detail << "; " << level << "x " << (ok ? "ok" : "bad");
    all_ok = all_ok && ok;
  }
  o.require(all_ok, "perturbation levels");
  return o;
}

// --- 3: gradient checks -----------------------------------------------------

FusionConfig toy_fusion() {
  FusionConfig c;
  c.feature_dim = 8;
  c.mid_dim = 8;
  c.output_channels = {8, 12, 12};
  return c;
}

RefinerConfig toy_refiner() {
  RefinerConfig c;
  c.fusion_dim = 12;
  c.channel_scale = 32;
  c.batch_norm = false;
  return c;
}

WarpfieldConfig toy_warp() {
  WarpfieldConfig c;
  c.grid = 4;
  c.fusion_dim = 6;
  c.scatter_dim = 4;
  c.base_channels = 2;
  c.volume_channels = 3;
  c.decoder_channels = {5};
  return c;
}

Outcome criterion_3() {
  Outcome o;
  const auto t0 = Clock::now();
  double worst_fusion = 0.0;
  double worst_refiner = 0.0;
  double worst_warp = 0.0;
  {
    torch::manual_seed(31);
    Fusion fusion(toy_fusion());
    testing::jitter_biases(*fusion);
    fusion->to(torch::kFloat64);
    auto f1 = torch::randn({1, 12, 8}, torch::kFloat64);
    auto f2 = torch::randn({1, 10, 8}, torch::kFloat64);
    auto x1 = torch::rand({1, 12, 3}, torch::kFloat64) * 0.3;
    auto n1 = torch::rand({1, 12, 3}, torch::kFloat64);
    auto x2 = torch::rand({1, 10, 3}, torch::kFloat64) * 0.3;
    auto gt = torch::rand({1, 10, 3}, torch::kFloat64);
    for (uint64_t seed : {1, 2, 3}) {
      worst_fusion = std::max(worst_fusion, testing::directional_gradient_error(fusion->parameters(), [&] {
        return nocs_classification_loss(fusion->forward(f1, f2, x1, n1, x2).logits, gt);
      }, seed));
    }
  }
  {
    torch::manual_seed(32);
    auto cfg = toy_refiner();
    Refiner r(cfg);
    {
      torch::NoGradGuard g;
      for (auto& p : r->mesh_head()->last()->parameters()) p.normal_(0.0, 0.1);
      for (auto& p : r->pc_head()->last()->parameters()) p.normal_(0.0, 0.1);
    }
    testing::jitter_biases(*r);
    r->to(torch::kFloat64);
    auto logits = torch::randn({2, 8, 3, 64}, torch::kFloat64);
    auto fusion = torch::randn({2, 8, 12}, torch::kFloat64);
    auto xyz = torch::randn({2, 8, 3}, torch::kFloat64);
    auto nocs_in = torch::rand({2, 8, 3}, torch::kFloat64);
    auto mesh = torch::rand({2, 12, 3}, torch::kFloat64) * 0.5 + 0.25;
    auto gt = torch::rand({2, 8, 3}, torch::kFloat64);
    auto gt_mesh = torch::rand({2, 12, 3}, torch::kFloat64) * 0.5 + 0.25;
    for (uint64_t seed : {1, 2, 3}) {
      worst_refiner = std::max(worst_refiner, testing::directional_gradient_error(r->parameters(), [&] {
        auto out = r->forward(logits, fusion, xyz, nocs_in, mesh);
        return nocs_classification_loss(out.refined_logits, gt) + mesh_l2_loss(out.refined_mesh, gt_mesh);
      }, seed));
    }
  }
  {
    torch::manual_seed(33);
    WarpField w(toy_warp());
    testing::jitter_biases(*w);
    w->to(torch::kFloat64);
    auto fusion = torch::randn({1, 16, 6}, torch::kFloat64);
    auto nocs_in = torch::rand({1, 16, 3}, torch::kFloat64);
    auto q = torch::rand({1, 10, 3}, torch::kFloat64);
    auto gt = torch::randn({1, 10, 3}, torch::kFloat64) * 0.1;
    auto center = torch::zeros({1, 3}, torch::kFloat64);
    for (uint64_t seed : {1, 2, 3}) {
      worst_warp = std::max(worst_warp, testing::directional_gradient_error(w->parameters(), [&] {
        return warp_loss(w->forward(fusion, nocs_in, q, center), gt);
      }, seed));
    }
  }
  const double secs = seconds_since(t0);
  o.detail << std::scientific << std::setprecision(2) << "worst relative error: fusion " << worst_fusion
           << ", refiner " << worst_refiner << ", warp " << worst_warp << std::fixed << std::setprecision(1) << ", "
           << secs << " s";
  o.require(worst_fusion < 1e-3 && worst_refiner < 1e-3 && worst_warp < 1e-3, "tolerance 1e-3");
  o.require(secs < 300.0, "runtime < 5 min");
  return o;
}

// --- 4: structural invariants -----------------------------------------------

Outcome criterion_4() {
  Outcome o;
  torch::NoGradGuard no_grad;
  bool fusion_ok = true;
  {
    torch::manual_seed(41);
    Fusion fusion(toy_fusion());
    fusion->eval();
    for (int trial = 0; trial < 5; ++trial) {
      const int64_t n1 = 50 + 30 * trial;
      const int64_t n2 = 40 + 20 * trial;
      auto f1 = torch::randn({1, n1, 8});
      auto f2 = torch::randn({1, n2, 8});
      auto x1 = torch::rand({1, n1, 3}) * 0.3;
      auto n1c = torch::rand({1, n1, 3});
      auto x2 = torch::rand({1, n2, 3}) * 0.3;
      auto base = fusion->forward(f1, f2, x1, n1c, x2);
      auto p = torch::randperm(n1);
      auto q = torch::randperm(n2);
      auto out = fusion->forward(f1.index_select(1, p), f2.index_select(1, q), x1.index_select(1, p),
                                 n1c.index_select(1, p), x2.index_select(1, q));
      fusion_ok = fusion_ok && torch::equal(out.features, base.features.index_select(1, q)) &&
                  torch::equal(out.logits, base.logits.index_select(1, q));
    }
  }
  bool refiner_ok = true;
  bool identity_ok = true;
  {
    torch::manual_seed(42);
    auto cfg = toy_refiner();
    cfg.batch_norm = true;
    Refiner fresh(cfg);
    Refiner r(cfg);
    {
      torch::NoGradGuard g;
      for (auto& p : r->mesh_head()->last()->parameters()) p.normal_(0.0, 0.1);
      for (auto& p : r->pc_head()->last()->parameters()) p.normal_(0.0, 0.1);
    }
    for (bool train : {true, false}) {
      r->train(train);
      fresh->train(train);
      auto logits = torch::randn({2, 30, 3, 64});
      auto fusion = torch::randn({2, 30, 12});
      auto xyz = torch::randn({2, 30, 3});
      auto nocs_in = torch::rand({2, 30, 3});
      auto mesh = torch::rand({2, 40, 3});
      auto base = r->forward(logits, fusion, xyz, nocs_in, mesh);
      auto p = torch::randperm(30);
      auto q = torch::randperm(40);
      auto out = r->forward(logits.index_select(1, p), fusion.index_select(1, p), xyz.index_select(1, p),
                            nocs_in.index_select(1, p), mesh.index_select(1, q));
      refiner_ok = refiner_ok && torch::equal(out.pc_global, base.pc_global) &&
                   torch::equal(out.mesh_global, base.mesh_global) && torch::equal(out.mesh_scale, base.mesh_scale) &&
                   torch::equal(out.mesh_offset, base.mesh_offset);
      // Per-point rows only in eval mode: batch statistics are summed in input order.
      if (!train) {
        refiner_ok = refiner_ok && torch::equal(out.refined_logits, base.refined_logits.index_select(1, p));
      }
      auto id = fresh->forward(logits, fusion, xyz, nocs_in, mesh);
      identity_ok = identity_ok && torch::equal(id.refined_logits, logits) && torch::equal(id.refined_mesh, mesh) &&
                    torch::equal(id.mesh_scale, torch::ones({2, 3})) &&
                    torch::equal(id.mesh_offset, torch::zeros({2, 3}));
    }
  }
  bool scatter_ok = true;
  {
    torch::manual_seed(43);
    for (int64_t g : {4, 8, 16}) {
      auto f = torch::randn({2, 500, 5});
      auto p = torch::rand({2, 500, 3});
      auto perm = torch::randperm(500);
      auto a = scatter_max(f, p, g);
      auto b = scatter_max(f.index_select(1, perm), p.index_select(1, perm), g);
      scatter_ok = scatter_ok && torch::equal(a.volume, b.volume) && torch::equal(a.mask, b.mask);
    }
  }
  o.detail << "fusion equivariance " << (fusion_ok ? "exact" : "broken") << ", refiner pooling "
           << (refiner_ok ? "exact" : "broken") << ", scatter " << (scatter_ok ? "exact" : "broken")
           << ", refiner identity at init " << (identity_ok ? "exact" : "broken");
  o.require(fusion_ok, "fusion");
  o.require(refiner_ok, "refiner");
  o.require(scatter_ok, "scatter");
  o.require(identity_ok, "identity");
  return o;
}

// --- 5-8: training ----------------------------------------------------------

RunConfig desk_config() {
  RunConfig rc;
  rc.data.points_per_frame = 2000;
  rc.data.raster_resolution = 120;
  rc.data.template_resolution = 12;
  rc.samples.pc_points = 512;
  rc.samples.mesh_points = 512;
  rc.net.grid = 16;
  rc.net.encoder_channels = {32, 32, 64, 64};
  rc.net.decoder_channels = {32, 32, 32, 64};
  rc.net.attention_dim = 32;
  rc.net.fusion_channels = {32, 64, 64};
  rc.net.scatter_dim = 16;
  rc.net.volume_base_channels = 8;
  rc.net.volume_channels = 32;
  rc.net.warp_decoder = {64, 64};
  rc.net.channel_scale = 8;
  rc.optim.learning_rate = 1e-3;
  rc.optim.batch_size = 4;
  rc.optim.epochs = 200;
  rc.optim.lr_decay_epoch = 150;
  // The mesh L2 term is ~1e3 smaller than the CE terms; at unit weight the
  // refiner's shared features drift away from the identity it should keep.
  rc.loss.mesh = 100.0;
  rc.validate();
  return rc;
}

struct Corpus {
  std::vector<SequenceDataset> train;
  std::vector<SequenceDataset> held;
};

// Seven Shirt instances alternating the two fold scripts; the last two are held out.
Corpus fold_corpus(const RunConfig& rc) {
  GeneratorOptions go;
  go.points_per_frame = rc.data.points_per_frame;
  go.raster_resolution = rc.data.raster_resolution;
  go.cameras = rc.data.cameras;
  Corpus c;
  for (int i = 0; i < 7; ++i) {
    auto mesh = vary_instance(make_template(Category::kShirt, rc.data.template_resolution), 100 + i);
    auto seq = generate_sequence(mesh, Category::kShirt, i % 2 ? Script::kFoldUD : Script::kFoldLR, 20, 10 + i, go);
    (i < 5 ? c.train : c.held).push_back(std::move(seq));
  }
  return c;
}

struct Trained {
  RunConfig config;
  Corpus corpus;
  std::optional<GarmentNet> net;
  std::string error;
};

Trained train_model(const fs::path& work, bool reuse) {
  Trained t;
  t.config = desk_config();
  t.corpus = fold_corpus(t.config);
  const fs::path ckpt = work / "fold_overfit.pt";
  try {
    if (reuse && fs::exists(ckpt)) {
      const auto info = read_checkpoint_info(ckpt);
      if (info.config_json == serialize(t.config) && info.epoch == t.config.optim.epochs) {
        auto [net, cfg] = open_checkpoint(ckpt);
        t.net = net;
        std::cout << "  reusing " << ckpt.string() << " (epoch " << info.epoch << ")" << std::endl;
        return t;
      }
    }
    torch::manual_seed(t.config.seed);
    GarmentNet net(t.config.model());
    auto options = TrainOptions::from(t.config);
    options.checkpoint = ckpt;
    Trainer trainer(net, options);
    const auto t0 = Clock::now();
    trainer.fit(t.corpus.train, [&](const EpochLog& l) {
      if (l.epoch % 20 == 0 || l.epoch == 1) {
        std::cout << "  epoch " << l.epoch << " loss " << l.loss << " nocs " << l.nocs << " refined " << l.refined_nocs
                  << " mesh " << l.mesh << " warp " << l.warp << " (" << std::fixed << std::setprecision(0)
                  << seconds_since(t0) << " s)" << std::defaultfloat << std::setprecision(6) << std::endl;
      }
    });
    t.net = trainer.net();
  } catch (const std::exception& e) {
    t.error = e.what();
  }
  return t;
}

eval::SequenceReport pooled_eval(const std::vector<SequenceDataset>& set, GarmentNet& net, RunConfig rc,
                                 const std::string& init, const std::string& id) {
  rc.track.init = init;
  std::vector<eval::SequenceReport> reports;
  for (const auto& s : set) reports.push_back(evaluate(s, net, make_init_pose(s, rc), rc));
  return eval::pool_reports(reports, rc.track.thresholds_cm, id);
}

std::string summary(const eval::SequenceReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << "d_nocs " << r.mean.d_nocs << ", d_chamf " << std::setprecision(2)
     << r.mean.d_chamf << " cm, d_corr " << r.mean.d_corr << " cm";
  for (const auto& [t, a] : r.accuracy) os << ", A_" << std::defaultfloat << t << "cm " << std::fixed << a;
  return os.str();
}

Outcome criterion_5(Trained& t) {
  Outcome o;
  auto r = pooled_eval(t.corpus.train, *t.net, t.config, "ground_truth", "train");
  o.detail << "train set, ground-truth init: " << summary(r);
  o.require(r.mean.d_nocs < 0.05, "d_nocs < 0.05");
  o.require(r.accuracy.at(3.0) > 0.8, "A_3cm > 80%");
  return o;
}

Outcome criterion_6(Trained& t) {
  Outcome o;
  auto gt = pooled_eval(t.corpus.held, *t.net, t.config, "ground_truth", "held");
  auto pert = pooled_eval(t.corpus.held, *t.net, t.config, "perturbed", "held_perturbed");
  const double degradation = (pert.mean.d_nocs - gt.mean.d_nocs) / gt.mean.d_nocs;
  bool finite = std::isfinite(gt.mean.d_nocs) && std::isfinite(gt.mean.d_corr);
  bool monotone = true;
  double prev = -1.0;
  for (const auto& [d, a] : gt.accuracy) {
    finite = finite && std::isfinite(a);
    monotone = monotone && a >= prev;
    prev = a;
  }
  o.detail << "held-out GT init: " << summary(gt) << "; 1x perturbed d_nocs " << std::setprecision(4)
           << pert.mean.d_nocs << " (" << std::showpos << std::setprecision(1) << 100.0 * degradation << std::noshowpos
           << "%)";
  o.require(gt.mean.d_nocs < 0.15, "d_nocs < 0.15");
  o.require(finite && monotone, "finite monotone A_d");
  o.require(degradation < 0.5, "perturbed degradation < 50%");
  return o;
}

// Counts steps where a metric improves with more noise. Returns false if
// there is more than one such step or one larger than 5% relative.
bool nearly_monotone(const std::vector<double>& v, bool higher_is_worse, int& inversions, double& worst) {
  for (size_t i = 1; i < v.size(); ++i) {
    const double better = higher_is_worse ? v[i - 1] - v[i] : v[i] - v[i - 1];
    if (better > 0.0) {
      ++inversions;
      worst = std::max(worst, better / std::max(std::abs(v[i - 1]), 1e-12));
    }
  }
  return inversions <= 1 && worst <= 0.05;
}

Outcome criterion_7(Trained& t, const fs::path& work) {
  Outcome o;
  auto noise = noise_sweep(t.corpus.train, *t.net, t.config);
  auto drop = frame_drop_sweep(t.corpus.train, *t.net, t.config);
  const fs::path dir = work / "sweeps";
  fs::create_directories(dir);
  size_t files = 0;
  for (const auto* s : {&noise, &drop}) {
    write_sweep(*s, dir / ("sweep_" + s->axis + ".json"));
    files += plot_sweep(*s, dir / ("sweep_" + s->axis)).size();
  }
  std::map<std::string, std::vector<double>> curves;
  for (const auto& p : noise.points) {
    curves["d_nocs"].push_back(p.pooled.mean.d_nocs);
    curves["d_chamf"].push_back(p.pooled.mean.d_chamf);
    curves["d_corr"].push_back(p.pooled.mean.d_corr);
    for (const auto& [d, a] : p.pooled.accuracy) {
      std::ostringstream key;
      key << "A_" << d;
      curves[key.str()].push_back(a);
    }
  }
  int inversions = 0;
  double worst = 0.0;
  bool ok = true;
  for (const auto& [name, v] : curves) ok = nearly_monotone(v, name[0] == 'd', inversions, worst) && ok;
  o.detail << "noise d_nocs";
  for (double v : curves["d_nocs"]) o.detail << ' ' << std::fixed << std::setprecision(4) << v;
  o.detail << ", d_corr";
  for (double v : curves["d_corr"]) o.detail << ' ' << std::setprecision(2) << v;
  o.detail << "; frame drop d_corr";
  for (const auto& p : drop.points) o.detail << ' ' << p.label << '=' << p.pooled.mean.d_corr;
  o.detail << "; " << inversions << " inversion(s), worst " << std::setprecision(1) << 100.0 * worst << "%; "
           << files << " plots in " << dir.string();
  o.require(noise.points.size() == 3 && drop.points.size() == 5, "sweep points");
  o.require(files == 8, "curves emitted");
  o.require(ok, "monotone in noise (one inversion <= 5%)");
  return o;
}

Outcome criterion_8(Trained& t) {
  Outcome o;
  auto tc = tracker_config(t.config, t.corpus.train.front());
  tc.mesh_refine_budget = 1;
  const auto range = nocs::NoiseParams::for_level(nocs::NoiseLevel::k1x);
  double corrupted_l2 = 0.0;
  double refined_l2 = 0.0;
  double inverse_l2 = 0.0;
  double param_err = 0.0;
  int cases = 0;
  std::mt19937_64 rng(808);
  for (const auto& seq : t.corpus.train) {
    const auto& clean = seq.canonical_mesh.vertices;
    for (int k = 0; k < 4; ++k) {
      std::array<double, 3> s{};
      std::array<double, 3> off{};
      for (int a = 0; a < 3; ++a) s[a] = std::uniform_real_distribution<double>(range.s_mesh[a].lo, range.s_mesh[a].hi)(rng);
      for (int a = 0; a < 3; ++a) off[a] = std::uniform_real_distribution<double>(range.o_pc[a].lo, range.o_pc[a].hi)(rng);
      CanonicalMesh corrupted = seq.canonical_mesh;
      PointMatrix inverse(clean.rows(), 3);
      for (Eigen::Index v = 0; v < clean.rows(); ++v) {
        for (int a = 0; a < 3; ++a) {
          const double c = std::clamp((clean(v, a) - 0.5) * s[a] + 0.5 + off[a], 0.0, 1.0);
          corrupted.vertices(v, a) = static_cast<float>(c);
          inverse(v, a) = static_cast<float>((c - 0.5 - off[a]) / s[a] + 0.5);
        }
      }
      const size_t f = 1 + static_cast<size_t>(k) * 4;
      InitPose pose{InitSource::kGroundTruth, seq.frames[f - 1].points, seq.frames[f - 1].gt_nocs, corrupted};
      auto r = step(init(seq.frames[f - 1], pose, tc), seq.frames[f], *t.net, tc);
      auto mean_l2 = [&](const PointMatrix& m) { return (m - clean).rowwise().norm().mean(); };
      corrupted_l2 += mean_l2(corrupted.vertices);
      refined_l2 += mean_l2(r.canonical_mesh.vertices);
      inverse_l2 += mean_l2(inverse);
      for (int a = 0; a < 3; ++a) {
        param_err += std::abs(r.mesh_scale[a] - 1.0 / s[a]) + std::abs(r.mesh_offset[a] + off[a] / s[a]);
      }
      ++cases;
    }
  }
  corrupted_l2 /= cases;
  refined_l2 /= cases;
  inverse_l2 /= cases;
  param_err /= 6.0 * cases;
  o.detail << std::fixed << std::setprecision(4) << cases << " corruptions: mean vertex L2 corrupted " << corrupted_l2
           << " -> refined " << refined_l2 << " (analytic inverse " << inverse_l2
           << ", mean |param - inverse param| " << param_err << ")";
  o.require(refined_l2 <= 0.02, "refined L2 <= 0.02");
  return o;
}

// --- 9: tracking-loop contracts ----------------------------------------------

Outcome criterion_9(Trained* t) {
  Outcome o;
  auto seq = testing::tiny_sequence(6);
  torch::manual_seed(9);
  GarmentNet net(testing::tiny_model());
  {
    torch::NoGradGuard g;
    for (auto& p : net->refiner()->mesh_head()->last()->parameters()) p.normal_(0.0, 0.3);
    for (auto& p : net->refiner()->pc_head()->last()->parameters()) p.normal_(0.0, 3.0);
  }
  TrackerConfig cfg;
  cfg.pc_points = 128;
  cfg.mesh_points = 128;
  cfg.mesh_refine_budget = 2;
  cfg.seed = 3;

  const auto s0 = init(seq.frames[0], ground_truth_pose(seq), cfg);
  const auto copy = s0;
  auto a = step(s0, seq.frames[1], net, cfg);
  auto b = step(copy, seq.frames[1], net, cfg);
  const bool purity = s0.prev_points == copy.prev_points && s0.prev_nocs == copy.prev_nocs &&
                      s0.canonical_mesh.vertices == copy.canonical_mesh.vertices &&
                      s0.frame_index == copy.frame_index && s0.mesh_refine_budget == copy.mesh_refine_budget &&
                      a.nocs == b.nocs && a.task_vertices == b.task_vertices;

  bool freeze = true;
  auto state = s0;
  PointMatrix frozen;
  for (size_t f = 1; f < seq.frames.size(); ++f) {
    auto r = step(state, seq.frames[f], net, cfg);
    if (f <= 2) {
      freeze = freeze && !(r.canonical_mesh.vertices == state.canonical_mesh.vertices);
    } else {
      freeze = freeze && r.canonical_mesh.vertices == frozen && r.state.mesh_refine_budget == 0;
    }
    frozen = r.canonical_mesh.vertices;
    state = r.state;
  }

  const bool strict = eval::accuracy_at({3.0, 2.9999, 3.0001, 5.0}, 3.0) == 0.25 &&
                      eval::accuracy_at({3.0}, 3.0) == 0.0 && eval::accuracy_at({2.0}, 3.0) == 1.0;

  bool exchange = true;
  {
    auto pose = perturbed_pose(seq, nocs::NoiseParams::for_level(nocs::NoiseLevel::k1x), 5);
    const fs::path dir = fs::temp_directory_path() / "gtrack_acceptance_pose";
    fs::remove_all(dir);
    write_init_pose(pose, dir);
    auto back = read_init_pose(dir);
    fs::remove_all(dir);
    exchange = back.points == pose.points && back.nocs == pose.nocs && back.mesh.vertices == pose.mesh.vertices &&
               back.mesh.faces == pose.mesh.faces;
    auto via_file = step(init(seq.frames[0], back, cfg), seq.frames[1], net, cfg);
    auto direct = step(init(seq.frames[0], pose, cfg), seq.frames[1], net, cfg);
    exchange = exchange && via_file.nocs == direct.nocs && via_file.task_vertices == direct.task_vertices;
  }

  // Stage timings of the full pipeline (the trained model when available).
  StageTimings mean;
  int frames = 0;
  if (t != nullptr && t->net) {
    auto tracked = track_sequence(t->corpus.train.front(), *t->net, ground_truth_pose(t->corpus.train.front()),
                                  tracker_config(t->config, t->corpus.train.front()));
    for (const auto& s : tracked.steps) {
      mean.encode_ms += s.timings.encode_ms;
      mean.fuse_ms += s.timings.fuse_ms;
      mean.refine_ms += s.timings.refine_ms;
      mean.warp_ms += s.timings.warp_ms;
      ++frames;
    }
  } else {
    auto tracked = track_sequence(seq, net, ground_truth_pose(seq), cfg);
    for (const auto& s : tracked.steps) {
      mean.encode_ms += s.timings.encode_ms;
      mean.fuse_ms += s.timings.fuse_ms;
      mean.refine_ms += s.timings.refine_ms;
      mean.warp_ms += s.timings.warp_ms;
      ++frames;
    }
  }
  const bool timed = frames > 0 && mean.encode_ms > 0 && mean.fuse_ms > 0 && mean.refine_ms > 0 && mean.warp_ms > 0;
  o.detail << "purity " << (purity ? "ok" : "bad") << ", freeze after K " << (freeze ? "ok" : "bad") << ", strict A_d "
           << (strict ? "ok" : "bad") << ", exchange round trip " << (exchange ? "ok" : "bad") << "; mean stage ms over "
           << frames << " frames: encode " << std::fixed << std::setprecision(1) << mean.encode_ms / frames
           << ", fuse " << mean.fuse_ms / frames << ", refine " << mean.refine_ms / frames << ", warp "
           << mean.warp_ms / frames << ", total " << mean.total_ms() / frames;
  o.require(purity, "state purity");
  o.require(freeze, "mesh freeze");
  o.require(strict, "strict A_d");
  o.require(exchange, "exchange round trip");
  o.require(timed, "stage timings");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gtrack acceptance suite"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "gtrack_acceptance").string();
  bool reuse = false;
  app.add_option("--criteria", only, "criteria to run (default: all)")->delimiter(',');
  app.add_option("--work", work, "directory for the checkpoint and sweep plots");
  app.add_flag("--reuse-checkpoint", reuse, "reuse a finished checkpoint with an identical config from --work");
  CLI11_PARSE(app, argc, argv);
  torch::set_num_threads(1);
  std::set<int> want(only.begin(), only.end());
  if (want.empty()) want = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  fs::create_directories(work);

  int failed = 0;
  auto report = [&](int n, const std::string& name, const std::function<Outcome()>& run) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << n << " (" << name << "): " << o.detail.str() << "  ["
              << std::fixed << std::setprecision(1) << seconds_since(t0) << " s]" << std::defaultfloat << std::endl;
  };

  if (want.count(1)) report(1, "oracle equivalence", criterion_1);
  if (want.count(2)) report(2, "NOCS math", criterion_2);
  if (want.count(3)) report(3, "gradient checks", criterion_3);
  if (want.count(4)) report(4, "structural invariants", criterion_4);

  std::optional<Trained> trained;
  const bool needs_training = want.count(5) || want.count(6) || want.count(7) || want.count(8);
  if (needs_training) {
    std::cout << "training the fold model (5 sequences, T=20, 200 epochs, desk-scale widths)" << std::endl;
    trained = train_model(work, reuse);
  }
  auto with_model = [&](int n, const std::string& name, const std::function<Outcome(Trained&)>& run) {
    report(n, name, [&] {
      if (!trained->net) {
        Outcome o;
        o.pass = false;
        o.detail << "training failed: " << trained->error;
        return o;
      }
      return run(*trained);
    });
  };
  if (want.count(5)) with_model(5, "overfit reproduction", criterion_5);
  if (want.count(6)) with_model(6, "generalization smoke test", criterion_6);
  if (want.count(7)) with_model(7, "robustness protocol", [&](Trained& t) { return criterion_7(t, work); });
  if (want.count(8)) with_model(8, "refiner recovery", criterion_8);
  if (want.count(9)) {
    report(9, "tracking-loop contracts", [&] { return criterion_9(trained && trained->net ? &*trained : nullptr); });
  }
  std::cout << (failed == 0 ? "all selected criteria passed" : std::to_string(failed) + " criterion(s) failed")
            << std::endl;
  return failed == 0 ? 0 : 1;
}
