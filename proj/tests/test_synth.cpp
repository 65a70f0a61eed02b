#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "gtrack/dataset.hpp"
#include "gtrack/geometry.hpp"
#include "gtrack/render.hpp"
#include "gtrack/synth.hpp"
#include "test_util.hpp"

using namespace gtrack;
namespace fs = std::filesystem;

namespace {

GeneratorOptions small_options() {
  GeneratorOptions o;
  o.points_per_frame = 600;
  o.raster_resolution = 96;
  return o;
}

// Ray/triangle intersection (Moller-Trumbore); returns the ray parameter or +inf.
double ray_hit(const Eigen::Vector3d& o, const Eigen::Vector3d& d, const Eigen::Vector3d& a,
               const Eigen::Vector3d& b, const Eigen::Vector3d& c) {
  const Eigen::Vector3d e1 = b - a;
  const Eigen::Vector3d e2 = c - a;
  const Eigen::Vector3d p = d.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-14) return std::numeric_limits<double>::infinity();
  const Eigen::Vector3d s = o - a;
  const double u = s.dot(p) / det;
  if (u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
  const Eigen::Vector3d q = s.cross(e1);
  const double v = d.dot(q) / det;
  if (v < 0.0 || u + v > 1.0) return std::numeric_limits<double>::infinity();
  const double t = e2.dot(q) / det;
  return t > 0.0 ? t : std::numeric_limits<double>::infinity();
}

// A point is visible from a camera when no face crosses the segment from the
// camera to the point more than `tol` meters in front of it.
bool visible(const Vec3& point, const Vec3& eye, const PointMatrix& v, const FaceMatrix& f, double tol) {
  const Eigen::Vector3d o = eye.cast<double>();
  const Eigen::Vector3d d = point.cast<double>() - o;
  const double len = d.norm();
  for (Eigen::Index k = 0; k < f.rows(); ++k) {
    const double t = ray_hit(o, d, v.row(f(k, 0)).transpose().cast<double>(),
                             v.row(f(k, 1)).transpose().cast<double>(), v.row(f(k, 2)).transpose().cast<double>());
    if (t < 1.0 && (1.0 - t) * len > tol) return false;
  }
  return true;
}

PointCloudFrame sheet_frame(int n) {
  // A flat 0.4 m sheet at z = 0 with a two-triangle-per-cell grid.
  CanonicalMesh m;
  m.vertices.resize((n + 1) * (n + 1), 3);
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.vertices.row(j * (n + 1) + i) << static_cast<float>(i) / n, static_cast<float>(j) / n, 0.5F;
  m.faces.resize(2 * n * n, 3);
  int f = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const int a = j * (n + 1) + i;
      m.faces.row(f++) << a, a + 1, a + n + 2;
      m.faces.row(f++) << a, a + n + 2, a + n + 1;
    }
  PointCloudFrame frame;
  frame.gt_nocs = m.vertices;
  frame.mesh_vertices_task = m.vertices;
  frame.mesh_vertices_task.col(0).array() = (m.vertices.col(0).array() - 0.5F) * 0.4F;
  frame.mesh_vertices_task.col(1).array() = (m.vertices.col(1).array() - 0.5F) * 0.4F;
  frame.mesh_vertices_task.col(2).setZero();
  frame.points = m.faces.cast<float>();  // faces smuggled through for the caller
  return frame;
}

}  // namespace

TEST_SUITE("synth") {
  TEST_CASE("templates have documented counts and stay in the unit cube") {
    for (auto cat : {Category::kShirt, Category::kPants, Category::kTop, Category::kSkirt}) {
      for (int r : {4, 5, 8, 12}) {
        auto mesh = make_template(cat, r);
        auto counts = template_counts(cat, r);
        CHECK(mesh.vertex_count() == counts.vertices);
        CHECK(mesh.face_count() == counts.faces);
        CHECK(mesh.vertices.minCoeff() >= 0.0F);
        CHECK(mesh.vertices.maxCoeff() <= 1.0F);
        CHECK(mesh.faces.minCoeff() >= 0);
        CHECK(mesh.faces.maxCoeff() < mesh.vertex_count());
        CHECK(make_template(cat, r) == mesh);
      }
    }
    const int r = 8;
    CHECK(template_counts(Category::kShirt, r).vertices == (r + 1) * (4 * r + 1));
    CHECK(template_counts(Category::kShirt, r).faces == 8 * r * r);
    CHECK(template_counts(Category::kSkirt, r).vertices == (2 * r + 1) * (r + 1));
    CHECK_THROWS_AS(make_template(Category::kShirt, 3), InputError);
    CHECK_THROWS_AS(parse_category("Dress"), InputError);
  }

  TEST_CASE("instances keep the bounding box") {
    auto base = make_template(Category::kPants, 8);
    auto inst = vary_instance(base, 42);
    CHECK_FALSE(inst == base);
    CHECK(inst.faces == base.faces);
    for (int a = 0; a < 3; ++a) {
      CHECK(inst.vertices.col(a).minCoeff() == doctest::Approx(base.vertices.col(a).minCoeff()));
      CHECK(inst.vertices.col(a).maxCoeff() == doctest::Approx(base.vertices.col(a).maxCoeff()));
    }
    CHECK(vary_instance(base, 42) == inst);
  }

  TEST_CASE("frame 0 is the template laid flat on the table") {
    auto mesh = vary_instance(make_template(Category::kShirt, 6), 1);
    auto poses = animate(mesh, Script::kFoldLR, 5, 9);
    const auto& p0 = poses.front();
    CHECK(p0.col(2).cwiseAbs().maxCoeff() == 0.0F);
    // Rigid placement: planar distances are 0.6 m per NOCS unit.
    std::mt19937_64 rng(2);
    for (int k = 0; k < 200; ++k) {
      const auto i = static_cast<Eigen::Index>(rng() % mesh.vertex_count());
      const auto j = static_cast<Eigen::Index>(rng() % mesh.vertex_count());
      const double dn = (mesh.vertices.row(i).head<2>() - mesh.vertices.row(j).head<2>()).norm();
      const double dt = (p0.row(i).head<2>() - p0.row(j).head<2>()).norm();
      CHECK(dt == doctest::Approx(0.6 * dn).epsilon(1e-4));
    }
    CHECK_THROWS_AS(animate(mesh, Script::kFoldLR, 1, 0), InputError);
  }

  TEST_CASE("a finished left-right fold mirrors one half onto the other") {
    const double layer = 0.002;
    for (auto cat : {Category::kShirt, Category::kPants, Category::kSkirt}) {
      auto mesh = vary_instance(make_template(cat, 8), 5);
      auto last = animate(mesh, Script::kFoldLR, 12, 3).back();
      int checked = 0;
      for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
        if (mesh.vertices(v, 0) <= 0.5F + 1e-5F) continue;
        // Partner: the vertex at the mirrored NOCS position.
        Eigen::Index partner = -1;
        double best = 1e9;
        for (Eigen::Index u = 0; u < mesh.vertex_count(); ++u) {
          const double d = std::hypot(mesh.vertices(u, 0) - (1.0F - mesh.vertices(v, 0)),
                                      mesh.vertices(u, 1) - mesh.vertices(v, 1));
          if (d < best) {
            best = d;
            partner = u;
          }
        }
        REQUIRE(best < 1e-5);
        Eigen::Vector3f expected = last.row(partner).transpose();
        expected.z() += static_cast<float>(layer);
        CHECK((last.row(v).transpose() - expected).norm() <= 1e-3F);
        ++checked;
      }
      CHECK(checked > 0);
    }
  }

  TEST_CASE("sequences are deterministic and keep topology") {
    auto mesh = vary_instance(make_template(Category::kTop, 6), 3);
    for (auto script : {Script::kFoldUD, Script::kCrumpleLift, Script::kFlingFlatten}) {
      auto a = generate_sequence(mesh, Category::kTop, script, 4, 17, small_options());
      auto b = generate_sequence(mesh, Category::kTop, script, 4, 17, small_options());
      CHECK(a == b);
      for (const auto& f : a.frames) {
        CHECK(f.mesh_vertices_task.rows() == mesh.vertex_count());
        CHECK(f.points.rows() == 600);
        CHECK(f.gt_nocs.minCoeff() >= 0.0F);
        CHECK(f.gt_nocs.maxCoeff() <= 1.0F);
      }
    }
    auto fling = animate(mesh, Script::kFlingFlatten, 6, 4);
    auto flat = animate(mesh, Script::kFoldLR, 2, 4).front();
    CHECK((fling.back() - flat).cwiseAbs().maxCoeff() <= 1e-6F);
    CHECK(fling.front().col(2).maxCoeff() > 0.1F);
  }

  TEST_CASE("rendered points lie on the surface with consistent labels") {
    auto mesh = vary_instance(make_template(Category::kShirt, 6), 2);
    auto poses = animate(mesh, Script::kFoldLR, 9, 5);
    const auto& task = poses[6];
    auto cams = camera_ring(4, 1.1F, 55.0F, Vec3(0, 0, 0.05F), 96);
    auto r = render_partial(task, mesh.faces, mesh.vertices, cams, 300, 8);
    REQUIRE(r.points.rows() == 300);
    for (Eigen::Index i = 0; i < r.points.rows(); ++i) {
      const Vec3 p = r.points.row(i).transpose();
      CHECK(point_mesh_distance(p, task, mesh.faces) <= 1e-4);
      // Locate the point on its face and re-interpolate the label.
      const int f = r.face_ids[static_cast<size_t>(i)];
      const Eigen::Vector3d a = task.row(mesh.faces(f, 0)).transpose().cast<double>();
      const Eigen::Vector3d b = task.row(mesh.faces(f, 1)).transpose().cast<double>();
      const Eigen::Vector3d c = task.row(mesh.faces(f, 2)).transpose().cast<double>();
      const Eigen::Vector3d n = (b - a).cross(c - a);
      const Eigen::Vector3d q = p.cast<double>();
      const double area = n.squaredNorm();
      const double wa = (c - b).cross(q - b).dot(n) / area;
      const double wb = (a - c).cross(q - c).dot(n) / area;
      const double wc = 1.0 - wa - wb;
      const Eigen::Vector3d label = wa * mesh.vertices.row(mesh.faces(f, 0)).transpose().cast<double>() +
                                    wb * mesh.vertices.row(mesh.faces(f, 1)).transpose().cast<double>() +
                                    wc * mesh.vertices.row(mesh.faces(f, 2)).transpose().cast<double>();
      CHECK((label - r.gt_nocs.row(i).transpose().cast<double>()).norm() <= 1e-5);
      bool seen = false;
      for (const auto& cam : cams) seen = seen || visible(p, cam.position, task, mesh.faces, 1.5e-3);
      CHECK(seen);
    }
  }

  TEST_CASE("one camera above a sheet only sees the front side") {
    auto frame = sheet_frame(6);
    FaceMatrix faces = frame.points.cast<int32_t>();
    Camera top;
    top.position = Vec3(0.05F, 0.02F, 1.0F);
    top.up = Vec3(0, 1, 0);
    top.width = top.height = 96;
    std::vector<Camera> cams{top};
    auto r = render_partial(frame.mesh_vertices_task, faces, frame.gt_nocs, cams, 200, 3);
    for (Eigen::Index i = 0; i < r.points.rows(); ++i) {
      const Vec3 p = r.points.row(i).transpose();
      const Vec3 n = face_normal(frame.mesh_vertices_task, faces, r.face_ids[static_cast<size_t>(i)]).normalized();
      const float facing = n.dot((top.position - p).normalized()) * r.sides[static_cast<size_t>(i)];
      CHECK(facing > 0.0F);
      CHECK(r.sides[static_cast<size_t>(i)] == r.sides[0]);
    }

    Camera below = top;
    below.position = Vec3(-0.05F, 0.0F, -1.0F);
    std::vector<Camera> both{top, below};
    auto r2 = render_partial(frame.mesh_vertices_task, faces, frame.gt_nocs, both, 400, 3);
    int up = 0;
    for (auto s : r2.sides) up += s > 0 ? 1 : 0;
    CHECK(up > 0);
    CHECK(up < 400);

    Camera away = top;
    away.position = Vec3(0, 0, 5);
    away.target = Vec3(0, 0, 10);
    std::vector<Camera> none{away};
    CHECK_THROWS_AS(render_partial(frame.mesh_vertices_task, faces, frame.gt_nocs, none, 10, 1), InputError);
  }

  TEST_CASE("dataset round trip and error contracts") {
    auto mesh = vary_instance(make_template(Category::kSkirt, 4), 8);
    auto ds = generate_sequence(mesh, Category::kSkirt, Script::kFoldLR, 3, 21, small_options());
    ds.manifest.seq_id = "skirt_0001";
    ds.manifest.instance_id = 4;
    const fs::path root = fs::temp_directory_path() / "gtrack_ds_test";
    fs::remove_all(root);
    const auto dir = io::sequence_dir(root, ds);
    CHECK(dir == root / "Skirt" / "skirt_0001");
    io::write_dataset(ds, dir);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "canonical_mesh.verts.bin"));
    CHECK(fs::exists(dir / "frames" / "2.points.bin"));
    CHECK(io::read_dataset(dir) == ds);

    SUBCASE("corrupted magic") {
      std::fstream f(dir / "frames" / "1.nocs.bin", std::ios::in | std::ios::out | std::ios::binary);
      f.write("XXXX", 4);
      f.close();
      CHECK_THROWS_AS(io::read_dataset(dir), FormatError);
    }
    SUBCASE("truncated array") {
      fs::resize_file(dir / "frames" / "0.points.bin", 40);
      CHECK_THROWS_AS(io::read_dataset(dir), FormatError);
    }
    SUBCASE("older manifest version") {
      std::ifstream in(dir / "manifest.json");
      std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      in.close();
      const auto pos = text.find("\"format_version\": 2");
      REQUIRE(pos != std::string::npos);
      text.replace(pos, 19, "\"format_version\": 1");
      std::ofstream(dir / "manifest.json") << text;
      CHECK_THROWS_AS(io::read_dataset(dir), VersionError);
    }
    SUBCASE("malformed manifest") {
      std::ofstream(dir / "manifest.json") << "{not json";
      CHECK_THROWS_AS(io::read_dataset(dir), FormatError);
    }
    fs::remove_all(root);
  }

  TEST_CASE("data root honours the environment override") {
    ::unsetenv("GT_DATA_ROOT");
    CHECK(io::data_root("", "fallback") == fs::path("fallback"));
    ::setenv("GT_DATA_ROOT", "/tmp/elsewhere", 1);
    CHECK(io::data_root("", "fallback") == fs::path("/tmp/elsewhere"));
    CHECK(io::data_root("explicit", "fallback") == fs::path("explicit"));
    ::unsetenv("GT_DATA_ROOT");
  }
}
