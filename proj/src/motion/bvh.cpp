#include "cogest/motion/bvh.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include "cogest/core/error.hpp"

namespace cogest::motion {
namespace {

struct Token {
  std::string text;
  int line;
};

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string w;
  while (is >> w) out.push_back(w);
  return out;
}

double to_double(const std::string& s, int line) {
  double v = 0;
  const char* first = s.data();
  if (!s.empty() && s[0] == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ParseError(line, "expected a number, got '" + s + "'");
  return v;
}

int to_int(const std::string& s, int line) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || v < 0) throw ParseError(line, "expected a count, got '" + s + "'");
  return v;
}

class HierarchyParser {
 public:
  HierarchyParser(std::vector<Token> tokens, int end_line) : tokens_(std::move(tokens)), end_line_(end_line) {}

  Skeleton parse() {
    expect("HIERARCHY");
    expect("ROOT");
    Skeleton s;
    parse_joint(s, -1);
    if (pos_ != tokens_.size()) throw ParseError(tokens_[pos_].line, "unexpected '" + tokens_[pos_].text + "' after root joint");
    return s;
  }

 private:
  const Token& next(const char* what) {
    if (pos_ >= tokens_.size()) throw ParseError(end_line_, std::string("unexpected end of hierarchy, expected ") + what);
    return tokens_[pos_++];
  }
  void expect(const std::string& word) {
    const Token& t = next(word.c_str());
    if (t.text != word) throw ParseError(t.line, "expected '" + word + "', got '" + t.text + "'");
  }
  Vec3 parse_offset() {
    expect("OFFSET");
    Vec3 v;
    for (int i = 0; i < 3; ++i) {
      const Token& t = next("offset component");
      v(i) = to_double(t.text, t.line);
    }
    return v;
  }

  void parse_joint(Skeleton& s, int parent) {
    const Token& name = next("joint name");
    Joint j;
    j.name = name.text;
    j.parent = parent;
    expect("{");
    j.offset = parse_offset();
    const Token& kw = next("CHANNELS");
    if (kw.text != "CHANNELS") throw ParseError(kw.line, "expected 'CHANNELS', got '" + kw.text + "'");
    const Token& count = next("channel count");
    const int n = to_int(count.text, count.line);
    for (int i = 0; i < n; ++i) {
      const Token& c = next("channel name");
      auto ch = parse_channel(c.text);
      if (!ch) throw ParseError(c.line, "unknown channel '" + c.text + "'");
      j.channels.push_back(*ch);
    }
    const int index = s.size();
    s.joints.push_back(std::move(j));
    for (;;) {
      const Token& t = next("JOINT, End Site or '}'");
      if (t.text == "}") return;
      if (t.text == "JOINT") {
        parse_joint(s, index);
      } else if (t.text == "End") {
        expect("Site");
        expect("{");
        s.joints[static_cast<std::size_t>(index)].end_site = parse_offset();
        expect("}");
      } else {
        throw ParseError(t.line, "unexpected '" + t.text + "' in joint " + s.joints[static_cast<std::size_t>(index)].name);
      }
    }
  }

  std::vector<Token> tokens_;
  std::size_t pos_ = 0;
  int end_line_;
};

void append_number(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  out.append(buf, ptr);
}

void dfs_order(const Skeleton& s, int j, std::vector<int>& order) {
  order.push_back(j);
  for (int c = j + 1; c < s.size(); ++c) {
    if (s.joints[static_cast<std::size_t>(c)].parent == j) dfs_order(s, c, order);
  }
}

void write_joint(std::string& out, const Skeleton& s, int j, int depth) {
  const Joint& joint = s.joints[static_cast<std::size_t>(j)];
  const std::string ind(static_cast<std::size_t>(depth) * 2, ' ');
  out += ind + (joint.parent < 0 ? "ROOT " : "JOINT ") + joint.name + "\n" + ind + "{\n";
  out += ind + "  OFFSET";
  for (int i = 0; i < 3; ++i) {
    out += ' ';
    append_number(out, joint.offset(i));
  }
  out += "\n" + ind + "  CHANNELS " + std::to_string(joint.channels.size());
  for (Channel c : joint.channels) out += " " + channel_name(c);
  out += "\n";
  for (int c = j + 1; c < s.size(); ++c) {
    if (s.joints[static_cast<std::size_t>(c)].parent == j) write_joint(out, s, c, depth + 1);
  }
  if (joint.end_site) {
    out += ind + "  End Site\n" + ind + "  {\n" + ind + "    OFFSET";
    for (int i = 0; i < 3; ++i) {
      out += ' ';
      append_number(out, (*joint.end_site)(i));
    }
    out += "\n" + ind + "  }\n";
  }
  out += ind + "}\n";
}

}  // namespace

double RawMotion::fps() const {
  if (!(frame_time > 0)) throw DataError("frame time must be positive");
  return std::round(1.0 / frame_time);
}

Vec3 RawMotion::root_channels(int f) const {
  Vec3 p = Vec3::Zero();
  const Joint& root = skeleton.joints.at(0);
  for (std::size_t c = 0; c < root.channels.size(); ++c) {
    const double v = frames(f, static_cast<Eigen::Index>(c));
    if (root.channels[c] == Channel::Xposition) p(0) = v;
    if (root.channels[c] == Channel::Yposition) p(1) = v;
    if (root.channels[c] == Channel::Zposition) p(2) = v;
  }
  return p;
}

RawMotion parse_bvh(std::istream& in) {
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);

  std::vector<Token> tokens;
  std::size_t motion_line = lines.size();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto words = split_ws(lines[i]);
    if (!words.empty() && words[0] == "MOTION") {
      motion_line = i;
      break;
    }
    for (auto& w : words) tokens.push_back({std::move(w), static_cast<int>(i + 1)});
  }
  RawMotion m;
  m.skeleton = HierarchyParser(std::move(tokens), static_cast<int>(motion_line + 1)).parse();
  if (motion_line == lines.size()) throw ParseError(static_cast<int>(lines.size()), "missing MOTION section");

  std::size_t i = motion_line + 1;
  auto next_nonblank = [&](const char* what) -> std::vector<std::string> {
    while (i < lines.size()) {
      auto w = split_ws(lines[i++]);
      if (!w.empty()) return w;
    }
    throw ParseError(static_cast<int>(lines.size()), std::string("unexpected end of file, expected ") + what);
  };
  auto w = next_nonblank("Frames:");
  int line = static_cast<int>(i);
  if (w.size() != 2 || w[0] != "Frames:") throw ParseError(line, "expected 'Frames: <count>'");
  const int n = to_int(w[1], line);
  w = next_nonblank("Frame Time:");
  line = static_cast<int>(i);
  if (w.size() != 3 || w[0] != "Frame" || w[1] != "Time:") throw ParseError(line, "expected 'Frame Time: <seconds>'");
  m.frame_time = to_double(w[2], line);
  if (!(m.frame_time > 0)) throw ParseError(line, "frame time must be positive");

  const int channels = m.skeleton.channel_count();
  m.frames.resize(n, channels);
  for (int f = 0; f < n; ++f) {
    w = next_nonblank("frame data");
    line = static_cast<int>(i);
    if (static_cast<int>(w.size()) != channels) {
      throw DataError("line " + std::to_string(line) + ": frame " + std::to_string(f) + " has " + std::to_string(w.size()) +
                      " values but the hierarchy declares " + std::to_string(channels) + " channels");
    }
    for (int c = 0; c < channels; ++c) m.frames(f, c) = to_double(w[static_cast<std::size_t>(c)], line);
  }
  while (i < lines.size()) {
    if (!split_ws(lines[i++]).empty()) {
      throw DataError("line " + std::to_string(i) + ": more frame rows than the declared " + std::to_string(n));
    }
  }
  return m;
}

RawMotion parse_bvh_string(const std::string& text) {
  std::istringstream in(text);
  return parse_bvh(in);
}

RawMotion load_bvh(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  return parse_bvh(in);
}

std::string serialize_bvh(const RawMotion& m) {
  m.skeleton.validate();
  std::string out = "HIERARCHY\n";
  write_joint(out, m.skeleton, 0, 0);
  out += "MOTION\nFrames: " + std::to_string(m.frames.rows()) + "\nFrame Time: ";
  append_number(out, m.frame_time);
  out += '\n';
  // Joints are written depth-first, so frame columns follow that order.
  std::vector<int> order;
  dfs_order(m.skeleton, 0, order);
  std::vector<Eigen::Index> columns;
  for (int j : order) {
    const int first = m.skeleton.channel_offset(j);
    for (std::size_t c = 0; c < m.skeleton.joints[static_cast<std::size_t>(j)].channels.size(); ++c) {
      columns.push_back(first + static_cast<Eigen::Index>(c));
    }
  }
  if (static_cast<Eigen::Index>(columns.size()) != m.frames.cols()) throw ShapeError("frame width does not match the channel count");
  for (Eigen::Index f = 0; f < m.frames.rows(); ++f) {
    for (std::size_t c = 0; c < columns.size(); ++c) {
      if (c) out += ' ';
      append_number(out, m.frames(f, columns[c]));
    }
    out += '\n';
  }
  return out;
}

void save_bvh(const std::filesystem::path& path, const RawMotion& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize_bvh(m);
}

}  // namespace cogest::motion
