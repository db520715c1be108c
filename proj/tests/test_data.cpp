#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pptr/data/dataset.hpp"
#include "pptr/geometry/plane.hpp"
#include "pptr/primitives/fit.hpp"

using namespace pptr;
using namespace pptr::data;
using geometry::Vec3;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("pptr_test_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void expect_same(const geometry::PointSequence& a, const geometry::PointSequence& b) {
  ASSERT_EQ(a.length(), b.length());
  for (std::size_t t = 0; t < a.length(); ++t) {
    const auto &fa = a.frames[t], &fb = b.frames[t];
    ASSERT_EQ(fa.size(), fb.size());
    EXPECT_EQ(fa.positions, fb.positions);
    EXPECT_EQ(fa.has_normals(), fb.has_normals());
    if (fa.has_normals() && fb.has_normals()) {
      EXPECT_EQ(*fa.normals, *fb.normals);
    }
    EXPECT_EQ(fa.labels, fb.labels);
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

template <typename F>
void expect_code(Errc code, F&& f) {
  try {
    f();
    FAIL() << "expected " << errc_name(code);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), code) << e.what();
  }
}

}  // namespace

TEST(Generate, NoiselessPointsLieOnPlantedPlanes) {
  SceneSpec s;
  s.num_patches = 4;
  s.points_per_patch = 50;
  s.noise_sigma = 0.0;
  s.num_frames = 3;
  s.rotation_deg_per_frame = 7.0;
  s.translation_per_frame = Vec3(0.1, -0.2, 0.3);
  s.seed = 12;
  const auto g = generate(s);
  for (std::size_t t = 0; t < 3; ++t) {
    const auto& f = g.sequence.frames[t];
    const auto groups = primitives::members(g.truth[t]);
    for (std::size_t j = 1; j < groups.size(); ++j) {
      std::vector<Vec3> pts;
      for (std::size_t i : groups[j]) pts.push_back(f.positions[i]);
      EXPECT_LT(geometry::fit_plane_lsq(pts).rms_residual, 1e-12);
      for (const auto& p : pts) EXPECT_LT(g.truth[t].planes[j - 1].distance(p), 1e-12);
    }
  }
}

TEST(Generate, SameSeedBitIdentical) {
  SceneSpec s;
  s.num_frames = 3;
  s.clutter_fraction = 0.2;
  s.rotation_deg_per_frame = 3.0;
  s.seed = 77;
  const auto a = generate(s), b = generate(s);
  expect_same(a.sequence, b.sequence);
  s.seed = 78;
  EXPECT_NE(generate(s).sequence.frames[0].positions, a.sequence.frames[0].positions);
}

TEST(Generate, LabelsMatchNearestPlantedPlane) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneSpec s;
    s.num_patches = 2 + seed % 4;
    s.points_per_patch = 200;
    s.noise_sigma = 0.001;
    s.seed = seed;
    const auto g = generate(s);
    const auto& f = g.sequence.frames[0];
    const auto& truth = g.truth[0];
    for (std::size_t i = 0; i < f.size(); ++i) {
      std::size_t nearest = 0;
      double best = 1e300;
      for (std::size_t j = 0; j < truth.planes.size(); ++j) {
        const double d = truth.planes[j].distance(f.positions[i]);
        if (d < best) best = d, nearest = j + 1;
      }
      ASSERT_LE(best, 0.05);
      ASSERT_EQ(static_cast<int>(nearest), truth.labels[i]);
    }
  }
}

TEST(Generate, TruthSatisfiesInvariants) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SceneSpec s;
    s.seed = seed;
    s.clutter_fraction = 0.3;
    s.num_frames = 2;
    s.clutter_class = 3;
    const auto g = generate(s);
    for (std::size_t t = 0; t < 2; ++t) {
      primitives::check_invariants(g.truth[t]);
      const auto& labels = *g.sequence.frames[t].labels;
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (g.truth[t].labels[i] == primitives::kClutter) {
          EXPECT_EQ(labels[i], 3);
        }
    }
    const std::size_t clutter = static_cast<std::size_t>(
        std::count(g.truth[0].labels.begin(), g.truth[0].labels.end(), primitives::kClutter));
    EXPECT_NEAR(static_cast<double>(clutter) / static_cast<double>(g.truth[0].size()), 0.3, 0.01);
  }
}

TEST(Generate, ContextTilesClassesAndOcclusion) {
  for (int type : {0, 1}) {
    SceneSpec s;
    s.layout = Layout::ContextTiles;
    s.num_patches = 8;
    s.points_per_patch = 40;
    s.patch_size = 0.6;
    s.num_frames = 6;
    s.scene_type = type;
    s.occlude_context = true;
    s.occlusion_center = 3;
    s.seed = 5;
    const auto g = generate(s);
    EXPECT_EQ(g.scene_type, type);
    for (std::size_t t = 0; t < 6; ++t) {
      const bool hidden = t >= 2 && t <= 4;
      EXPECT_EQ(g.sequence.frames[t].size(), hidden ? 280u : 320u);
      EXPECT_EQ(g.truth[t].m_actual, hidden ? 7u : 8u);
      primitives::check_invariants(g.truth[t]);
      for (int c : *g.sequence.frames[t].labels) EXPECT_EQ(c / 2, type);
    }
  }
}

TEST(Generate, InvalidSpec) {
  SceneSpec s;
  s.noise_sigma = -1.0;
  expect_code(Errc::InvalidSpec, [&] { generate(s); });
  s = SceneSpec{};
  s.clutter_fraction = 1.5;
  expect_code(Errc::InvalidSpec, [&] { generate(s); });
  s = SceneSpec{};
  s.patch_classes = {0, 1};
  expect_code(Errc::InvalidSpec, [&] { generate(s); });
  s = SceneSpec{};
  s.layout = Layout::ContextTiles;
  expect_code(Errc::InvalidSpec, [&] { generate(s); });
}

TEST(Generate, SpecFromKeyValue) {
  std::istringstream in("num_patches=5\nnoise_sigma=0.25\nrotation_axis=1,0,0\nlayout=context-tiles\n");
  const auto s = scene_spec_from(KeyValue::parse(in));
  EXPECT_EQ(s.num_patches, 5u);
  EXPECT_EQ(s.noise_sigma, 0.25);
  EXPECT_EQ(s.rotation_axis, Vec3::UnitX());
  EXPECT_EQ(s.layout, Layout::ContextTiles);
  std::istringstream bad("noise_sigma=abc\n");
  expect_code(Errc::InvalidSpec, [&] { scene_spec_from(KeyValue::parse(bad)); });
}

TEST(SequenceIo, RoundTripIsExact) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    SceneSpec s;
    s.seed = seed;
    s.num_frames = 3;
    s.points_per_patch = 60;
    s.clutter_fraction = 0.1;
    s.rotation_deg_per_frame = 11.0;
    auto g = generate(s);
    if (seed % 2) {
      for (auto& f : g.sequence.frames) f = geometry::estimate_normals(f, 8).frame;
    }
    TempDir dir;
    write_sequence(g.sequence, dir.path / "seq");
    const auto back = read_sequence(dir.path / "seq");
    expect_same(g.sequence, back.sequence);
    EXPECT_TRUE(back.primitives.empty());
  }
}

TEST(SequenceIo, PrimitivesRoundTrip) {
  SceneSpec s;
  s.num_frames = 2;
  s.points_per_patch = 80;
  const auto g = generate(s);
  std::vector<primitives::PrimitiveAssignment> fits;
  for (const auto& f : g.sequence.frames) fits.push_back(primitives::ransac_planes(f, {}));
  TempDir dir;
  write_sequence(g.sequence, dir.path, &fits);
  const auto back = read_sequence(dir.path);
  ASSERT_EQ(back.primitives.size(), 2u);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(back.primitives[t].labels, fits[t].labels);
    EXPECT_EQ(back.primitives[t].m_target, fits[t].m_target);
    ASSERT_EQ(back.primitives[t].planes.size(), fits[t].planes.size());
    for (std::size_t j = 0; j < fits[t].planes.size(); ++j) {
      EXPECT_EQ(back.primitives[t].planes[j].normal, fits[t].planes[j].normal);
      EXPECT_EQ(back.primitives[t].planes[j].offset, fits[t].planes[j].offset);
      EXPECT_EQ(back.primitives[t].planes[j].rms_residual, fits[t].planes[j].rms_residual);
    }
  }
}

TEST(SequenceIo, SeventeenDigitText) {
  geometry::PointSequence seq;
  geometry::PointFrame f;
  f.positions = {Vec3(0.1, 1.0 / 3.0, -2.5e-17)};
  f.labels = std::vector<int>{2};
  seq.frames.push_back(f);
  TempDir dir;
  write_sequence(seq, dir.path);
  std::ifstream in(dir.path / "frame_0000.xyz");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "0.10000000000000001 0.33333333333333331 -2.4999999999999999e-17 2");
  std::ifstream m(dir.path / "manifest");
  std::stringstream ms;
  ms << m.rdbuf();
  EXPECT_EQ(ms.str(), "format_version=1\nL=1\nN=1\nhas_normals=0\nhas_labels=1\n");
}

TEST(SequenceIo, FrameCountMismatch) {
  TempDir dir;
  write_text(dir.path / "manifest", "format_version=1\nL=3\nN=1,1,1\nhas_normals=0\nhas_labels=0\n");
  write_text(dir.path / "frame_0000.xyz", "0 0 0\n");
  write_text(dir.path / "frame_0001.xyz", "0 0 0\n");
  expect_code(Errc::FrameCountMismatch, [&] { read_sequence(dir.path); });
}

TEST(SequenceIo, ParseErrorReportsLine) {
  TempDir dir;
  write_text(dir.path / "manifest", "format_version=1\nL=1\nN=6\nhas_normals=0\nhas_labels=1\n");
  write_text(dir.path / "frame_0000.xyz", "0 0 0 1\n1 0 0 1\n0 1 0 1\n1 1 0 1\n0 x 0 1\n2 2 0 1\n");
  try {
    read_sequence(dir.path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.code(), Errc::ParseError);
    EXPECT_EQ(e.line(), 5u);
  }
}

TEST(SequenceIo, WrongFieldCountIsParseError) {
  TempDir dir;
  write_text(dir.path / "manifest", "format_version=1\nL=1\nN=2\nhas_normals=1\nhas_labels=0\n");
  write_text(dir.path / "frame_0000.xyz", "0 0 0 0 0 1\n0 0 0\n");
  try {
    read_sequence(dir.path);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(SequenceIo, MalformedManifest) {
  const std::vector<std::string> bad = {
      "L=1\nN=1\nhas_normals=0\nhas_labels=0\n",
      "format_version=2\nL=1\nN=1\nhas_normals=0\nhas_labels=0\n",
      "format_version=1\nL=2\nN=1\nhas_normals=0\nhas_labels=0\n",
      "format_version=1\nL=1\nN=1\nhas_normals=maybe\nhas_labels=0\n",
      "format_version=1\nL=one\nN=1\nhas_normals=0\nhas_labels=0\n",
      "format_version=1\nL=1\nN=1\nhas_normals=0\n",
      "just text\n",
  };
  for (const auto& text : bad) {
    TempDir dir;
    write_text(dir.path / "manifest", text);
    write_text(dir.path / "frame_0000.xyz", "0 0 0\n");
    expect_code(Errc::MalformedManifest, [&] { read_sequence(dir.path); });
  }
}

TEST(SequenceIo, PointCountMismatchIsParseError) {
  TempDir dir;
  write_text(dir.path / "manifest", "format_version=1\nL=1\nN=3\nhas_normals=0\nhas_labels=0\n");
  write_text(dir.path / "frame_0000.xyz", "0 0 0\n1 1 1\n");
  expect_code(Errc::ParseError, [&] { read_sequence(dir.path); });
}

TEST(Dataset, GenerateAndIndexRoundTrip) {
  std::istringstream in(
      "layout=context-tiles\nnum_patches=8\npoints_per_patch=20\npatch_size=0.6\nnum_frames=4\n"
      "num_train=4\nnum_eval=2\nseed=3\n");
  const auto kv = KeyValue::parse(in);
  const auto spec = dataset_spec_from(kv);
  TempDir dir;
  const auto index = generate_dataset(spec, dir.path, kv);
  const auto back = read_index(dir.path);
  ASSERT_EQ(back.entries.size(), 6u);
  EXPECT_EQ(back.split("train").size(), 4u);
  EXPECT_EQ(back.split("eval").size(), 2u);
  std::size_t occluded = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(back.entries[i].name, index.entries[i].name);
    EXPECT_EQ(back.entries[i].scene_type, index.entries[i].scene_type);
    occluded += back.entries[i].occluded;
    const auto seq = read_sequence(dir.path / back.entries[i].name);
    EXPECT_EQ(seq.sequence.length(), 4u);
  }
  EXPECT_EQ(occluded, 3u);
  EXPECT_EQ(back.info.get("task"), "seg");
  EXPECT_EQ(back.info.get("num_classes"), "4");
}

TEST(Dataset, ClassificationCyclesMotionPatterns) {
  std::istringstream in("task=cls\nnum_patches=2\npoints_per_patch=10\nnum_frames=3\nnum_train=5\nnum_eval=3\n");
  const auto kv = KeyValue::parse(in);
  TempDir dir;
  const auto index = generate_dataset(dataset_spec_from(kv), dir.path, kv);
  for (std::size_t i = 0; i < index.entries.size(); ++i)
    EXPECT_EQ(index.entries[i].action, static_cast<int>(i % kNumMotionPatterns));
}
