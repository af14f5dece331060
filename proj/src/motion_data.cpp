// Copyright 2026 The motret Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "motret/motion_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "motret/binary_io.hpp"
#include "motret/errors.hpp"

namespace motret {

namespace {

using json = nlohmann::json;

constexpr std::array<std::string_view, kNumParts> kPartNames = {
    "torso", "left-arm", "right-arm", "left-leg", "right-leg"};

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::string_view part_name(BodyPart part) {
  return kPartNames[static_cast<int>(part)];
}

BodyPart parse_part(std::string_view name) {
  for (int p = 0; p < kNumParts; ++p)
    if (kPartNames[p] == name) return static_cast<BodyPart>(p);
  throw InvalidArgument("unknown body part '" + std::string(name) + "'");
}

SkeletonTopology::SkeletonTopology(std::vector<BodyPart> part_map,
                                   std::string name)
    : part_map_(std::move(part_map)), name_(std::move(name)) {
  if (part_map_.empty()) throw InvalidArgument("topology has no joints");
  for (int j = 0; j < joint_count(); ++j) {
    const int p = static_cast<int>(part_map_[j]);
    if (p < 0 || p >= kNumParts)
      throw InvalidArgument("joint " + std::to_string(j) +
                            " maps to an invalid part");
    members_[p].push_back(j);
  }
  for (int p = 0; p < kNumParts; ++p)
    if (members_[p].empty())
      throw InvalidArgument("body part '" + std::string(kPartNames[p]) +
                            "' has no joints");
}

SkeletonTopology SkeletonTopology::preset(std::string_view name) {
  using P = BodyPart;
  constexpr P T = P::kTorso, LA = P::kLeftArm, RA = P::kRightArm,
              LL = P::kLeftLeg, RL = P::kRightLeg;
  if (name == "kit21") {
    // 0-4 root/spine/head, 5-7 right arm, 8-10 left arm,
    // 11-15 right leg, 16-20 left leg.
    return SkeletonTopology({T, T, T, T, T, RA, RA, RA, LA, LA, LA, RL, RL,
                             RL, RL, RL, LL, LL, LL, LL, LL},
                            "kit21");
  }
  if (name == "humanml22") {
    // SMPL order: pelvis, l_hip, r_hip, spine1, l_knee, r_knee, spine2,
    // l_ankle, r_ankle, spine3, l_foot, r_foot, neck, l_collar, r_collar,
    // head, l_shoulder, r_shoulder, l_elbow, r_elbow, l_wrist, r_wrist.
    return SkeletonTopology({T, LL, RL, T, LL, RL, T, LL, RL, T, LL, RL, T,
                             LA, RA, T, LA, RA, LA, RA, LA, RA},
                            "humanml22");
  }
  throw InvalidArgument("unknown topology preset '" + std::string(name) +
                        "'");
}

void validate_sequence(const SkeletonSequence& seq) {
  if (seq.frames.rows() < 1) throw FormatError("T must be >= 1");
  if (seq.frames.cols() < kFeatureDim || seq.frames.cols() % kFeatureDim != 0)
    throw FormatError("D must be 9");
  if (!seq.frames.allFinite())
    throw FormatError("non-finite value in frames of '" + seq.motion_id + "'");
  if (!std::isfinite(seq.fps) || seq.fps <= 0.0f)
    throw FormatError("fps must be finite and positive");
}

std::vector<std::uint8_t> encode_motion(const SkeletonSequence& seq) {
  validate_sequence(seq);
  io::ByteWriter w;
  w.magic("MOTR");
  w.u32(static_cast<std::uint32_t>(seq.length()));
  w.u32(static_cast<std::uint32_t>(seq.joint_count()));
  w.u32(kFeatureDim);
  w.f32(seq.fps);
  std::vector<float> payload(static_cast<std::size_t>(seq.frames.size()));
  // Row-major storage already matches (t, j, d) order.
  for (Eigen::Index i = 0; i < seq.frames.size(); ++i)
    payload[i] = static_cast<float>(seq.frames.data()[i]);
  w.f32s(payload);
  return w.data();
}

void save_motion(const SkeletonSequence& seq,
                 const std::filesystem::path& path) {
  io::ByteWriter w;
  const auto bytes = encode_motion(seq);
  w.bytes(std::string_view(reinterpret_cast<const char*>(bytes.data()),
                           bytes.size()));
  w.write_file(path);
}

SkeletonSequence decode_motion(std::vector<std::uint8_t> bytes,
                               std::string motion_id) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("MOTR");
  const std::uint32_t t = r.u32("T");
  const std::uint32_t j = r.u32("J");
  const std::uint32_t d = r.u32("D");
  const float fps = r.f32("fps");
  if (t < 1) throw FormatError("T must be >= 1");
  if (j < 1) throw FormatError("J must be >= 1");
  if (d != kFeatureDim)
    throw FormatError("D must be 9, header says " + std::to_string(d));
  const std::uint64_t expected = std::uint64_t{t} * j * d * 4;
  if (r.remaining() != expected)
    throw FormatError("payload size " + std::to_string(r.remaining()) +
                      " does not match header T*J*D*4 = " +
                      std::to_string(expected));
  std::vector<float> payload(static_cast<std::size_t>(t) * j * d);
  r.f32s(payload, "frames");

  SkeletonSequence seq;
  seq.motion_id = std::move(motion_id);
  seq.fps = fps;
  seq.frames.resize(t, static_cast<Eigen::Index>(j) * d);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (!std::isfinite(payload[i]))
      throw FormatError("non-finite value in frames at (t=" +
                        std::to_string(i / (j * d)) + ", j=" +
                        std::to_string((i / d) % j) + ", d=" +
                        std::to_string(i % d) + ")");
    seq.frames.data()[i] = payload[i];
  }
  if (!std::isfinite(fps) || fps <= 0.0f)
    throw FormatError("fps must be finite and positive");
  return seq;
}

SkeletonSequence load_motion(const std::filesystem::path& path,
                             const SkeletonTopology& topology,
                             std::string motion_id) {
  if (motion_id.empty()) motion_id = path.stem().string();
  SkeletonSequence seq =
      decode_motion(io::read_file(path), std::move(motion_id));
  if (seq.joint_count() != topology.joint_count())
    throw FormatError("J=" + std::to_string(seq.joint_count()) +
                      " does not match topology '" + topology.name() +
                      "' with " + std::to_string(topology.joint_count()) +
                      " joints");
  return seq;
}

Matrix aggregate_body_parts(const SkeletonSequence& seq,
                            const SkeletonTopology& topology) {
  if (seq.joint_count() != topology.joint_count())
    throw ShapeError("sequence has " + std::to_string(seq.joint_count()) +
                     " joints, topology expects " +
                     std::to_string(topology.joint_count()));
  Matrix out = Matrix::Zero(seq.length(), kPartFeatures);
  for (int p = 0; p < kNumParts; ++p) {
    const auto& joints = topology.joints_of(static_cast<BodyPart>(p));
    const double inv = 1.0 / static_cast<double>(joints.size());
    for (int j : joints)
      out.middleCols(p * kFeatureDim, kFeatureDim) +=
          seq.frames.middleCols(j * kFeatureDim, kFeatureDim);
    out.middleCols(p * kFeatureDim, kFeatureDim) *= inv;
  }
  return out;
}

PaddedBatch pad_and_mask(const std::vector<Matrix>& part_sequences,
                         int max_len) {
  if (part_sequences.empty()) throw InvalidArgument("empty batch");
  if (max_len < 1) throw InvalidArgument("max_len must be >= 1");
  PaddedBatch batch;
  batch.batch = static_cast<int>(part_sequences.size());
  batch.max_len = max_len;
  batch.features = Matrix::Zero(
      static_cast<Eigen::Index>(batch.batch) * max_len, kPartFeatures);
  batch.mask.assign(static_cast<std::size_t>(batch.batch) * max_len, 0);
  for (int b = 0; b < batch.batch; ++b) {
    const Matrix& seq = part_sequences[b];
    if (seq.cols() != kPartFeatures)
      throw ShapeError("part sequence must have 45 columns");
    if (seq.rows() < 1) throw ShapeError("part sequence is empty");
    const int t_in = static_cast<int>(seq.rows());
    const int len = std::min(t_in, max_len);
    const int start = (t_in - len) / 2;
    batch.features.middleRows(static_cast<Eigen::Index>(b) * max_len, len) =
        seq.middleRows(start, len);
    std::fill_n(batch.mask.begin() + static_cast<std::ptrdiff_t>(b) * max_len,
                len, 1);
    batch.lengths.push_back(len);
  }
  return batch;
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw InvalidArgument("unknown split '" + std::string(name) + "'");
}

std::vector<const ManifestEntry*> DatasetManifest::entries_in(
    Split split) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(&e);
  return out;
}

std::vector<CaptionRecord> DatasetManifest::captions_in(Split split) const {
  std::vector<CaptionRecord> out;
  for (const auto& e : entries)
    if (e.split == split)
      out.insert(out.end(), e.captions.begin(), e.captions.end());
  return out;
}

void validate_manifest(const DatasetManifest& manifest) {
  std::set<std::string> motions, captions;
  for (const auto& e : manifest.entries) {
    if (e.motion_id.empty()) throw FormatError("empty motion_id in manifest");
    if (!motions.insert(e.motion_id).second)
      throw FormatError("duplicate motion_id '" + e.motion_id + "'");
    for (const auto& c : e.captions) {
      if (c.motion_id != e.motion_id)
        throw FormatError("caption '" + c.caption_id +
                          "' references motion '" + c.motion_id +
                          "' but is listed under '" + e.motion_id + "'");
      if (!captions.insert(c.caption_id).second)
        throw FormatError("duplicate caption_id '" + c.caption_id + "'");
      if (blank(c.text))
        throw FormatError("caption '" + c.caption_id + "' has empty text");
    }
  }
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    const json& topo = doc.at("topology");
    if (topo.is_string()) {
      m.topology = SkeletonTopology::preset(topo.get<std::string>());
    } else {
      std::vector<BodyPart> parts;
      for (const auto& p : topo.at("part_map"))
        parts.push_back(parse_part(p.get<std::string>()));
      if (static_cast<int>(parts.size()) != topo.at("joint_count").get<int>())
        throw FormatError("topology part_map length != joint_count");
      m.topology = SkeletonTopology(std::move(parts));
    }
    for (const auto& je : doc.at("entries")) {
      ManifestEntry e;
      e.motion_id = je.at("motion_id").get<std::string>();
      e.path = je.at("path").get<std::string>();
      e.split = parse_split(je.value("split", std::string("train")));
      for (const auto& jc : je.at("captions")) {
        CaptionRecord c;
        c.caption_id = jc.at("caption_id").get<std::string>();
        c.motion_id = jc.value("motion_id", e.motion_id);
        c.text = jc.at("text").get<std::string>();
        e.captions.push_back(std::move(c));
      }
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  validate_manifest(m);
  return m;
}

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& path) {
  validate_manifest(manifest);
  json doc;
  const std::string& topo = manifest.topology.name();
  if (topo == "kit21" || topo == "humanml22") {
    doc["topology"] = topo;
  } else {
    json parts = json::array();
    for (BodyPart p : manifest.topology.part_map())
      parts.push_back(std::string(part_name(p)));
    doc["topology"] = {{"joint_count", manifest.topology.joint_count()},
                       {"part_map", parts}};
  }
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    json caps = json::array();
    for (const auto& c : e.captions)
      caps.push_back({{"caption_id", c.caption_id}, {"text", c.text}});
    entries.push_back({{"motion_id", e.motion_id},
                       {"path", e.path.generic_string()},
                       {"split", std::string(split_name(e.split))},
                       {"captions", caps}});
  }
  doc["entries"] = entries;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

namespace {

constexpr int kSpeedLevels = 3;
constexpr std::array<double, kSpeedLevels> kFrequencyHz = {0.0, 0.5, 1.5};
// Faster parts also swing wider.
constexpr std::array<double, kSpeedLevels> kAmplitude = {0.0, 0.35, 0.8};
constexpr std::array<std::string_view, kSpeedLevels> kSpeedWords = {
    "", "slowly", "quickly"};
constexpr std::array<std::string_view, kNumParts> kPartPhrases = {
    "the torso", "the left arm", "the right arm", "the left leg",
    "the right leg"};

std::string synthetic_caption(const std::array<int, kNumParts>& levels) {
  std::vector<std::string> phrases;
  for (int p = 0; p < kNumParts; ++p)
    if (levels[p] > 0)
      phrases.push_back(std::string(kPartPhrases[p]) + " " +
                        std::string(kSpeedWords[levels[p]]));
  if (phrases.empty()) return "a person stands still";
  std::string text = "a person moves ";
  for (std::size_t i = 0; i < phrases.size(); ++i) {
    if (i > 0) text += (i + 1 == phrases.size()) ? " and " : ", ";
    text += phrases[i];
  }
  return text;
}

}  // namespace

SyntheticDataset generate_synthetic(int n_pairs, std::uint64_t seed,
                                    const SyntheticOptions& options) {
  if (n_pairs < 1) throw InvalidArgument("n_pairs must be >= 1");
  if (options.min_frames < 1 || options.max_frames < options.min_frames)
    throw InvalidArgument("invalid synthetic frame range");

  std::mt19937_64 rng(seed);
  // Every speed assignment over the five parts, in seeded order.
  std::vector<std::array<int, kNumParts>> grid;
  for (int code = 0; code < 243; ++code) {
    std::array<int, kNumParts> levels{};
    int c = code;
    for (int p = 0; p < kNumParts; ++p) {
      levels[p] = c % kSpeedLevels;
      c /= kSpeedLevels;
    }
    grid.push_back(levels);
  }
  std::shuffle(grid.begin(), grid.end(), rng);

  SyntheticDataset data;
  data.manifest.topology = SkeletonTopology::preset("kit21");
  const SkeletonTopology& topo = data.manifest.topology;
  const int joints = topo.joint_count();
  const int n_test =
      static_cast<int>(std::floor(options.test_fraction * n_pairs));

  std::uniform_int_distribution<int> length_dist(options.min_frames,
                                                 options.max_frames);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.01);

  for (int i = 0; i < n_pairs; ++i) {
    const auto& levels = grid[static_cast<std::size_t>(i) % grid.size()];
    SkeletonSequence seq;
    char id[32];
    std::snprintf(id, sizeof(id), "m%05d", i);
    seq.motion_id = id;
    seq.fps = options.fps;
    const int t_len = length_dist(rng);
    seq.frames.resize(t_len, joints * kFeatureDim);

    std::vector<double> amplitude(joints), phase(joints);
    for (int j = 0; j < joints; ++j) {
      const int level = levels[static_cast<int>(topo.part_of(j))];
      amplitude[j] = kAmplitude[level] * (0.9 + 0.2 * unit(rng));
      phase[j] = 2.0 * M_PI * unit(rng);
    }
    for (int t = 0; t < t_len; ++t) {
      const double time = t / static_cast<double>(options.fps);
      for (int j = 0; j < joints; ++j) {
        const int p = static_cast<int>(topo.part_of(j));
        const double freq = kFrequencyHz[levels[p]];
        const double angle =
            amplitude[j] * std::sin(2.0 * M_PI * freq * time + phase[j]);
        const double c = std::cos(angle), s = std::sin(angle);
        // First two columns of a rotation about the joint's local x axis,
        // then a rest offset displaced along the swing direction.
        const double feats[kFeatureDim] = {
            1.0, 0.0, 0.0, 0.0, c, s,
            0.1 * (p - 2), 1.0 - 0.05 * j + 0.1 * s, 0.1 * (1.0 - c)};
        for (int d = 0; d < kFeatureDim; ++d)
          seq.frames(t, j * kFeatureDim + d) = static_cast<float>(
              feats[d] + noise(rng));
      }
    }

    ManifestEntry entry;
    entry.motion_id = seq.motion_id;
    entry.path = std::filesystem::path("motions") / (seq.motion_id + ".motr");
    entry.split = i < n_pairs - n_test ? Split::kTrain : Split::kTest;
    CaptionRecord caption{seq.motion_id + "_c0", seq.motion_id,
                          synthetic_caption(levels)};
    entry.captions.push_back(caption);
    data.captions.push_back(caption);
    data.manifest.entries.push_back(std::move(entry));
    data.motions.push_back(std::move(seq));
  }
  return data;
}

void write_dataset(const SyntheticDataset& data,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "motions");
  for (std::size_t i = 0; i < data.motions.size(); ++i)
    save_motion(data.motions[i], dir / data.manifest.entries[i].path);
  save_manifest(data.manifest, dir / "manifest.json");
}

}  // namespace motret
