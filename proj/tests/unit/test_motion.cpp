#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "cogest/core/kvconfig.hpp"
#include "cogest/core/random.hpp"
#include "cogest/motion/bvh.hpp"
#include "cogest/motion/clip_io.hpp"
#include "cogest/motion/retarget.hpp"
#include "cogest/motion/rotation.hpp"
#include "cogest/motion/unified.hpp"

using namespace cogest;
using namespace cogest::motion;

namespace {

const std::filesystem::path kData = std::filesystem::path(COGEST_SOURCE_DIR) / "tests" / "data" / "bvh";

Mat3 rx(double d) {
  const double r = d * M_PI / 180, c = std::cos(r), s = std::sin(r);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}
Mat3 ry(double d) {
  const double r = d * M_PI / 180, c = std::cos(r), s = std::sin(r);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}
Mat3 rz(double d) {
  const double r = d * M_PI / 180, c = std::cos(r), s = std::sin(r);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}
Mat3 compose(const std::string& order, const Vec3& a) {
  Mat3 m = Mat3::Identity();
  for (int i = 0; i < 3; ++i) m = m * (order[i] == 'X' ? rx(a(i)) : order[i] == 'Y' ? ry(a(i)) : rz(a(i)));
  return m;
}

// Canonical-skeleton channel data with small random joint rotations.
RawMotion canonical_motion(int frames, std::uint64_t seed, double yaw = 0.0, Vec3 velocity = Vec3::Zero()) {
  const Skeleton& s = canonical_skeleton();
  Rng rng(seed);
  RawMotion m;
  m.skeleton = s;
  m.frame_time = 0.05;
  m.frames = MatrixXd::Zero(frames, s.channel_count());
  MatrixXd base(s.size(), 3);
  for (Eigen::Index i = 0; i < base.size(); ++i) base.data()[i] = rng.uniform(-25, 25);
  for (int f = 0; f < frames; ++f) {
    m.frames.row(f).head<3>() = (velocity * f).transpose();
    for (int j = 0; j < s.size(); ++j) {
      const int c = s.channel_offset(j) + (j == 0 ? 3 : 0);
      for (int k = 0; k < 3; ++k) m.frames(f, c + k) = base(j, k) + 3.0 * std::sin(0.2 * f + j + k);
    }
    // root turns about Y only, so frame 0 faces exactly `yaw`
    m.frames.row(f).segment<3>(3) << 0.0, 0.0, yaw == 0.0 ? 0.0 : yaw + 5.0 * std::sin(0.2 * f);
  }
  return m;
}

std::string two_joint_bvh(const std::string& frame_time) {
  return "HIERARCHY\nROOT hips\n{\n  OFFSET 0 0 0\n  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n"
         "  JOINT chest\n  {\n    OFFSET 0 1 0\n    CHANNELS 3 Zrotation Xrotation Yrotation\n    End Site\n    {\n      OFFSET 0 1 0\n    }\n  }\n}\n"
         "MOTION\nFrames: 1\nFrame Time: " +
         frame_time + "\n0 0 0 0 0 0 0 0 0\n";
}

}  // namespace

TEST_CASE("euler to rot6d against composed axis matrices") {
  for (const char* o : {"XYZ", "XZY", "YXZ", "YZX", "ZXY", "ZYX"}) {
    const Rot6d r = euler_to_rot6d(Vec3::Zero(), EulerOrder(o));
    CHECK((r - (Rot6d() << 1, 0, 0, 0, 1, 0).finished()).norm() == 0.0);
  }
  // 90 degrees about Z: rows (0,-1,0) and (1,0,0)
  const Rot6d z90 = euler_to_rot6d(Vec3(90, 0, 0), EulerOrder("ZYX"));
  CHECK((z90 - (Rot6d() << 0, -1, 0, 1, 0, 0).finished()).norm() < 1e-15);

  Rng rng(7);
  double worst = 0;
  for (int i = 0; i < 2000; ++i) {
    const Vec3 a(rng.uniform(-180, 180), rng.uniform(-89, 89), rng.uniform(-180, 180));
    for (const char* o : {"XYZ", "ZXY", "YZX", "ZYX"}) {
      const Mat3 expected = compose(o, a);
      worst = std::max(worst, (rot6d_to_matrix(euler_to_rot6d(a, EulerOrder(o))) - expected).cwiseAbs().maxCoeff());
      const Vec3 back = matrix_to_euler(expected, EulerOrder(o));
      worst = std::max(worst, (compose(o, back) - expected).cwiseAbs().maxCoeff());
    }
  }
  CHECK(worst < 1e-9);
  CHECK_THROWS_AS(EulerOrder("XXY"), UsageError);
}

TEST_CASE("gimbal-locked matrices still round trip") {
  for (const char* o : {"XYZ", "ZXY", "ZYX", "YXZ"}) {
    const Vec3 a(30, 90, 10);
    const Mat3 m = compose(o, a);
    CHECK((compose(o, matrix_to_euler(m, EulerOrder(o))) - m).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("rot6d completion") {
  CHECK(rot6d_to_matrix((Rot6d() << 1, 0, 0, 0, 1, 0).finished()).isApprox(Mat3::Identity(), 1e-15));
  CHECK(rot6d_to_matrix((Rot6d() << 2, 0, 0, 0, 3, 0).finished()).isApprox(Mat3::Identity(), 1e-15));
  CHECK(rot6d_to_matrix((Rot6d() << 1, 0, 0, 1, 1, 0).finished()).isApprox(Mat3::Identity(), 1e-15));
  const Mat3 r = rot6d_to_matrix((Rot6d() << 0.3, -1.2, 0.5, 2.0, 0.1, -0.7).finished());
  CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(rot6d_to_matrix((Rot6d() << 0, 0, 0, 0, 1, 0).finished()), NumericalError);
  CHECK_THROWS_AS(rot6d_to_matrix((Rot6d() << 1, 0, 0, 2, 0, 0).finished()), NumericalError);
}

TEST_CASE("canonical skeleton and partition") {
  const Skeleton& s = canonical_skeleton();
  CHECK(s.size() == 55);
  s.validate();
  CHECK(s.find("left_index1") == 25);
  CHECK(s.find("right_thumb3") == 54);
  const int parents[55] = {-1, 0,  0,  0,  1,  2,  3,  4,  5,  6,  7,  8,  9,  9,  9,  12, 13, 14, 16,
                           17, 18, 19, 15, 15, 15, 20, 25, 26, 20, 28, 29, 20, 31, 32, 20, 34, 35, 20,
                           37, 38, 21, 40, 41, 21, 43, 44, 21, 46, 47, 21, 49, 50, 21, 52, 53};
  for (int j = 0; j < 55; ++j) CHECK(s.joints[static_cast<std::size_t>(j)].parent == parents[j]);
  const auto& p = BodyPartition::canonical();
  CHECK(p.fingers.size() == 30);
  CHECK(p.limbs.size() == 25);
  std::vector<int> seen(55, 0);
  for (int j : p.fingers) ++seen[static_cast<std::size_t>(j)];
  for (int j : p.limbs) ++seen[static_cast<std::size_t>(j)];
  for (int c : seen) CHECK(c == 1);
  for (int j : p.spine3_cut) CHECK(std::find(p.limbs.begin(), p.limbs.end(), j) != p.limbs.end());
  CHECK(layout::kWidth == 6 * 55 + 3 * 55 + 3 * 55 + 6 * 55 + 4);
}

TEST_CASE("parse hand-written bvh") {
  RawMotion m = parse_bvh_string(two_joint_bvh("0.05"));
  CHECK(m.skeleton.size() == 2);
  CHECK(m.frames.rows() == 1);
  CHECK(m.frames.isZero(0));
  CHECK(m.skeleton.joints[1].end_site.has_value());
  CHECK(parse_bvh_string(two_joint_bvh("0.0166667")).fps() == 60.0);
}

TEST_CASE("golden three-joint fixture parses to its literals") {
  const RawMotion m = load_bvh(kData / "three_joint.bvh");
  CHECK(m.skeleton.size() == 3);
  CHECK(m.frames.rows() == 10);
  CHECK(m.frames.cols() == 18);
  CHECK(m.frame_time == 0.0333333);
  CHECK(m.skeleton.joints[1].rotation_order().str() == "XYZ");
  const double row0[18] = {0, -1.7626, 1.0113, -0.217, -1.5844, 1.1281, -0.429, -1.3797, 1.2114,
                           -0.6312, -1.152, 1.26, -0.819, -0.9053, 1.2736, -0.988, -0.6438, 1.2524};
  for (int c = 0; c < 18; ++c) CHECK(m.frames(0, c) == row0[c]);
  CHECK(m.frames(2, 0) == 1.8413);
  CHECK(m.skeleton.joints[2].offset == Vec3(0, 20.25, 1.5));
}

TEST_CASE("serialize then parse is a fixpoint on every fixture") {
  for (const auto& e : std::filesystem::directory_iterator(kData)) {
    if (e.path().extension() != ".bvh") continue;
    const RawMotion a = load_bvh(e.path());
    const RawMotion b = parse_bvh_string(serialize_bvh(a));
    CHECK(a.frames == b.frames);
    CHECK(a.frame_time == b.frame_time);
    REQUIRE(a.skeleton.size() == b.skeleton.size());
    for (int j = 0; j < a.skeleton.size(); ++j) {
      CHECK(a.skeleton.joints[static_cast<std::size_t>(j)].name == b.skeleton.joints[static_cast<std::size_t>(j)].name);
      CHECK(a.skeleton.joints[static_cast<std::size_t>(j)].offset == b.skeleton.joints[static_cast<std::size_t>(j)].offset);
      CHECK(a.skeleton.joints[static_cast<std::size_t>(j)].channels == b.skeleton.joints[static_cast<std::size_t>(j)].channels);
    }
  }
  // the canonical skeleton is stored breadth-first; writing reorders joints
  const RawMotion c = canonical_motion(3, 1);
  const RawMotion d = parse_bvh_string(serialize_bvh(c));
  const RawMotion e = retarget_and_scale(d, canonical_skeleton());
  CHECK((e.frames - c.frames).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("bvh errors carry line numbers") {
  std::string bad = two_joint_bvh("0.05");
  bad.replace(bad.find("OFFSET 0 1 0"), 12, "OFFSET 0 x 0");
  try {
    parse_bvh_string(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 8);
  }
  std::string short_row = two_joint_bvh("0.05");
  short_row.replace(short_row.rfind("0 0 0 0 0 0 0 0 0"), 17, "0 0 0 0 0 0 0 0");
  CHECK_THROWS_AS(parse_bvh_string(short_row), DataError);
  try {
    parse_bvh_string(short_row);
  } catch (const ParseError&) {
    FAIL("channel mismatch is a structural error, not a parse error");
  } catch (const DataError&) {
  }
  CHECK_THROWS_AS(parse_bvh_string("HIERARCHY\nROOT a\n{\n OFFSET 0 0 0\n CHANNELS 1 Wrotation\n}\n"), ParseError);
}

TEST_CASE("retarget identity, scale and facing") {
  const Skeleton& ref = canonical_skeleton();
  const RawMotion m = canonical_motion(12, 3, 0.0, Vec3(0.02, 0, 0.01));
  const RawMotion same = retarget_and_scale(m, ref);
  CHECK((same.frames - m.frames).cwiseAbs().maxCoeff() < 1e-9);

  // uniformly 2x larger source moving 1 m per frame -> 0.5 m per frame
  RawMotion big = canonical_motion(4, 4, 0.0, Vec3(1.0, 0, 0));
  for (auto& j : big.skeleton.joints) j.offset *= 2.0;
  const RawMotion half = retarget_and_scale(big, ref);
  for (int f = 1; f < 4; ++f) CHECK(half.root_channels(f).x() - half.root_channels(f - 1).x() == doctest::Approx(0.5).epsilon(1e-12));

  // facing -Z: global positions equal the source rotated 180 degrees about Y
  const RawMotion back = canonical_motion(5, 5, 180.0, Vec3(0, 0, -0.03));
  const RawMotion turned = retarget_and_scale(back, ref);
  const PoseTrack a = track_from_raw(back), b = track_from_raw(turned);
  const Mat3 r = ry(180);
  double worst = 0;
  for (int f = 0; f < 5; ++f) {
    const auto pa = forward_kinematics(ref, &a.local[static_cast<std::size_t>(f * 55)], a.root.row(f).transpose());
    const auto pb = forward_kinematics(ref, &b.local[static_cast<std::size_t>(f * 55)], b.root.row(f).transpose());
    worst = std::max(worst, (pb - (pa * r.transpose())).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
  const Vec3 fwd = b.at(0, 0) * Vec3::UnitZ();
  CHECK(std::abs(fwd.x()) < 1e-9);
  CHECK(fwd.z() > 0);
}

TEST_CASE("retarget reports missing joints") {
  RawMotion m = load_bvh(kData / "walk_cm_60fps.bvh");
  try {
    retarget_and_scale(m, canonical_skeleton());
    FAIL("expected a retarget error");
  } catch (const RetargetError& e) {
    CHECK(e.missing().size() == 22);
    CHECK(std::string(e.what()).find("left_knee") != std::string::npos);
  }
}

TEST_CASE("bvh corpus to unified clips") {
  const ReprConfig cfg = ReprConfig::from_kv(KeyValueConfig::load(kData / "body22.cfg"));
  CHECK(cfg.name_map.size() == 22);
  CHECK(cfg.contacts.speed == 0.01);
  const MotionClip walk = prepare_bvh_clip(load_bvh(kData / "walk_cm_60fps.bvh"), cfg);
  CHECK(walk.frames.cols() == 994);
  CHECK(walk.length() == 100);
  // starts facing +Z and walks forward
  CHECK(walk.frames(99, layout::loc(0) + 2) > walk.frames(0, layout::loc(0) + 2) + 1.0f);
  // finger rotations are identity for body-only data
  CHECK(walk.frames(10, layout::rot(30)) == 1.0f);
  const MotionClip shorty = prepare_bvh_clip(load_bvh(kData / "short_cm_60fps.bvh"), cfg);
  CHECK(shorty.length() == 59);
  Rng rng(0);
  CHECK_THROWS_AS(clip_window(shorty, rng), ClipTooShort);
}

TEST_CASE("downsample picks nearest frames") {
  RawMotion m = canonical_motion(10, 6);
  m.frame_time = 1.0 / 60.0;
  for (int f = 0; f < 10; ++f) m.frames(f, 0) = f;
  const RawMotion d = downsample(m, 20);
  REQUIRE(d.frame_count() == 4);
  for (int k = 0; k < 4; ++k) CHECK(d.frames(k, 0) == 3 * k);
  CHECK(d.fps() == 20);
}

TEST_CASE("assembled features") {
  const auto& part = BodyPartition::canonical();
  // static standing pose
  RawMotion rest = canonical_motion(6, 7);
  rest.frames.setZero();
  const MotionClip a = assemble_unified(rest, part);
  CHECK(a.frames.cols() == 994);
  CHECK(a.frames.middleCols(layout::kLinVel, 3 * 55).isZero(0));
  CHECK(a.frames.middleCols(layout::kAngVel, 6 * 55).isZero(0));
  CHECK(a.frames.middleCols(layout::kContacts, 4).isOnes(0));

  // rigid translation along +X
  RawMotion slide = canonical_motion(6, 8, 0.0, Vec3(0.05, 0, 0));
  for (int f = 1; f < 6; ++f) slide.frames.row(f).tail(slide.frames.cols() - 6) = slide.frames.row(0).tail(slide.frames.cols() - 6);
  const MotionClip b = assemble_unified(slide, part);
  for (int f = 1; f < 6; ++f) {
    for (int j = 0; j < 55; ++j) {
      CHECK(b.frames(f, layout::lin_vel(j)) == doctest::Approx(0.05).epsilon(1e-5));
      CHECK(std::abs(b.frames(f, layout::lin_vel(j) + 1)) < 1e-6);
    }
  }
  CHECK(b.frames.middleCols(layout::kAngVel, 6 * 55).isZero(0));

  const MotionClip c = assemble_unified(canonical_motion(1, 9), part);
  CHECK(c.length() == 1);
  CHECK(c.frames.middleCols(layout::kLinVel, 3 * 55).isZero(0));

  RawMotion wrong;
  wrong.skeleton = parse_bvh_string(two_joint_bvh("0.05")).skeleton;
  wrong.frames = MatrixXd::Zero(2, 9);
  CHECK_THROWS_AS(assemble_unified(wrong, part), ShapeError);
}

TEST_CASE("contact rule") {
  MatrixXd loc = MatrixXd::Zero(3, 3 * 55);
  const ContactConfig cfg;
  auto c = detect_contacts(loc, cfg);
  CHECK(c.isOnes(0));
  loc(1, 3 * joint::left_ankle + 1) = 0.5;
  loc(2, 3 * joint::right_foot + 2) = 0.1;
  c = detect_contacts(loc, cfg);
  CHECK(c(1, 0) == 0.0f);
  CHECK(c(2, 3) == 0.0f);
  // v = 0.1 m/frame exceeds the configured speed threshold
  CHECK(0.1 >= cfg.speed);
  CHECK(c(2, 2) == 1.0f);
}

TEST_CASE("hybrid splice") {
  const auto& part = BodyPartition::canonical();
  MotionClip gesture = assemble_unified(canonical_motion(20, 11), part);
  MotionClip walk = assemble_unified(canonical_motion(20, 12, 0.0, Vec3(0, 0, 0.06)), part);
  walk.source = ClipSource::locomotion;

  const MotionClip same = splice_hybrid(gesture, gesture, part);
  CHECK((same.frames - gesture.frames).cwiseAbs().maxCoeff() < 1e-5);

  const MotionClip h = splice_hybrid(walk, gesture, part);
  CHECK(h.source == ClipSource::hybrid);
  for (int f = 0; f < 20; ++f) {
    for (int k = 0; k < 3; ++k) CHECK(h.frames(f, layout::loc(0) + k) == walk.frames(f, layout::loc(0) + k));
  }
  const auto lower = layout::joint_columns(part.spine3_cut);
  for (int c : lower) CHECK(h.frames.col(c) == walk.frames.col(c));
  CHECK(h.frames.middleCols(layout::kContacts, 4) == walk.frames.middleCols(layout::kContacts, 4));
  std::vector<int> upper;
  for (int j = 0; j < 55; ++j) {
    if (std::find(part.spine3_cut.begin(), part.spine3_cut.end(), j) == part.spine3_cut.end()) upper.push_back(j);
  }
  for (int j : upper) {
    CHECK(h.frames.middleCols(layout::rot(j), 6) == gesture.frames.middleCols(layout::rot(j), 6));
    CHECK(h.frames.middleCols(layout::ang_vel(j), 6) == gesture.frames.middleCols(layout::ang_vel(j), 6));
  }
  MotionClip shorter = gesture;
  shorter.frames.conservativeResize(19, Eigen::NoChange);
  shorter.mask.resize(19);
  CHECK_THROWS_AS(splice_hybrid(walk, shorter, part), SpliceError);
}

TEST_CASE("clip window") {
  Rng rng(21);
  MotionClip c;
  c.frames = MatrixXf::Random(300, 994);
  c.mask.assign(300, 1.0f);
  const MotionClip w = clip_window(c, rng);
  CHECK(w.length() == 180);
  CHECK(w.valid_length() == 180);
  bool contiguous = false;
  for (int s = 0; s <= 120; ++s) contiguous |= (w.frames == c.frames.middleRows(s, 180));
  CHECK(contiguous);

  c.frames = MatrixXf::Random(100, 994);
  c.mask.assign(100, 1.0f);
  const MotionClip p = clip_window(c, rng);
  CHECK(p.length() == 180);
  CHECK(p.frames.topRows(100) == c.frames);
  CHECK(p.frames.bottomRows(80).isZero(0));
  for (int f = 0; f < 180; ++f) CHECK(p.mask[static_cast<std::size_t>(f)] == (f < 100 ? 1.0f : 0.0f));

  c.frames = MatrixXf::Random(59, 994);
  c.mask.assign(59, 1.0f);
  CHECK_THROWS_AS(clip_window(c, rng), ClipTooShort);
}

TEST_CASE("clip files round trip") {
  MotionClip c = assemble_unified(canonical_motion(8, 13), BodyPartition::canonical());
  c.transcript = "wave point";
  c.emotion = 3;
  c.source = ClipSource::synthetic;
  const auto dir = std::filesystem::temp_directory_path() / "cogest_clip_io";
  save_clip(dir / "a", c);
  const MotionClip d = load_clip(dir / "a");
  CHECK(d.frames == c.frames);
  CHECK(d.mask == c.mask);
  CHECK(d.transcript == c.transcript);
  CHECK(d.emotion == c.emotion);
  CHECK(d.source == ClipSource::synthetic);
  CHECK_FALSE(d.audio_path.has_value());
  const RawMotion back = clip_to_raw(d);
  CHECK(back.skeleton.size() == 55);
  std::filesystem::remove_all(dir);
}

TEST_CASE("key value config") {
  std::istringstream in("# comment\n a = 1.5 \n\nname = left hip # trailing\n");
  const auto kv = KeyValueConfig::parse(in);
  CHECK(kv.get_double("a", 0) == 1.5);
  CHECK(kv.get("name") == std::optional<std::string>("left hip"));
  CHECK(kv.get_double("missing", 2.0) == 2.0);
  std::istringstream bad("ok = 1\nnot a pair\n");
  try {
    KeyValueConfig::parse(bad);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}
