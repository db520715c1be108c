#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pptr/common/keyvalue.hpp"
#include "pptr/common/random.hpp"
#include "pptr/common/task.hpp"
#include "pptr/data/io.hpp"
#include "pptr/data/scene.hpp"

namespace pptr::data {

using pptr::Task;
using pptr::parse_task;

using pptr::to_string;

/// A set of generated sequences. For classification, sequence i gets motion
/// pattern i mod 4. For segmentation on the context-tiles layout, a fraction
/// of sequences hides the context patch around the middle frame.
struct DatasetSpec {
  SceneSpec scene;
  Task task = Task::Segmentation;
  std::size_t num_train = 8;
  std::size_t num_eval = 4;
  double occluded_fraction = 0.5;
};

inline DatasetSpec dataset_spec_from(const KeyValue& kv) {
  DatasetSpec d;
  d.scene = scene_spec_from(kv);
  try {
    if (kv.has("task")) d.task = parse_task(kv.get("task"));
    d.num_train = static_cast<std::size_t>(kv.get_int("num_train", 8));
    d.num_eval = static_cast<std::size_t>(kv.get_int("num_eval", 4));
    d.occluded_fraction = kv.get_double("occluded_fraction", 0.5);
  } catch (const Error& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
  if (d.num_train + d.num_eval == 0) throw Error(Errc::InvalidSpec, "dataset has no sequences");
  if (!(d.occluded_fraction >= 0.0 && d.occluded_fraction <= 1.0))
    throw Error(Errc::InvalidSpec, "occluded_fraction must be in [0, 1]");
  validate(d.scene);
  return d;
}

struct SequenceEntry {
  std::string name;
  std::string split;  // "train" or "eval"
  int action = -1;
  int scene_type = -1;
  bool occluded = false;
};

struct DatasetIndex {
  KeyValue info;
  std::vector<SequenceEntry> entries;

  std::vector<std::size_t> split(const std::string& which) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < entries.size(); ++i)
      if (entries[i].split == which) out.push_back(i);
    return out;
  }
};

inline void write_index(const DatasetIndex& index, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(Errc::IoError, "cannot create " + dir.string());
  {
    std::ofstream out(dir / "dataset.txt", std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write dataset.txt");
    index.info.write(out);
  }
  std::ofstream out(dir / "sequences.csv", std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write sequences.csv");
  out << "name,split,action,scene_type,occluded\n";
  for (const auto& e : index.entries)
    out << e.name << ',' << e.split << ',' << e.action << ',' << e.scene_type << ',' << (e.occluded ? 1 : 0)
        << '\n';
}

inline DatasetIndex read_index(const fs::path& dir) {
  DatasetIndex index;
  if (!fs::exists(dir / "dataset.txt")) throw Error(Errc::IoError, "missing dataset.txt in " + dir.string());
  index.info = KeyValue::load((dir / "dataset.txt").string(), Errc::MalformedManifest);
  std::ifstream in(dir / "sequences.csv", std::ios::binary);
  if (!in) throw Error(Errc::IoError, "missing sequences.csv in " + dir.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) continue;
    std::vector<std::string> f;
    std::istringstream ls(line);
    std::string tok;
    while (std::getline(ls, tok, ',')) f.push_back(tok);
    if (f.size() != 5) throw ParseError(lineno, "sequences.csv: expected 5 fields");
    SequenceEntry e;
    e.name = f[0];
    e.split = f[1];
    try {
      e.action = static_cast<int>(KeyValue::to_int("action", f[2]));
      e.scene_type = static_cast<int>(KeyValue::to_int("scene_type", f[3]));
      e.occluded = KeyValue::to_int("occluded", f[4]) != 0;
    } catch (const Error& err) {
      throw ParseError(lineno, err.what());
    }
    index.entries.push_back(e);
  }
  return index;
}

inline std::string sequence_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "seq_%04zu", i);
  return buf;
}

/// Scene spec of sequence i (train sequences first, then eval).
inline SceneSpec sequence_spec(const DatasetSpec& d, std::size_t i, std::uint64_t seed, bool& occluded) {
  SceneSpec s = d.scene;
  s.seed = seed;
  const std::size_t local = i < d.num_train ? i : i - d.num_train;
  const double f = d.occluded_fraction;
  occluded = false;
  if (d.task == Task::Classification) {
    s.action_class = static_cast<int>(i % kNumMotionPatterns);
  } else if (s.layout == Layout::ContextTiles) {
    occluded = static_cast<std::size_t>((static_cast<double>(local) + 1.0) * f) >
               static_cast<std::size_t>(static_cast<double>(local) * f);
    s.occlude_context = occluded;
    if (occluded && d.scene.occlusion_center == 0) s.occlusion_center = s.num_frames / 2;
  }
  return s;
}

/// Generate every sequence and write the dataset directory.
inline DatasetIndex generate_dataset(const DatasetSpec& d, const fs::path& dir, const KeyValue& spec_echo) {
  DatasetIndex index;
  index.info = spec_echo;
  index.info.set_num("format_version", kFormatVersion);
  index.info.set("task", to_string(d.task));
  index.info.set_num("num_classes", d.task == Task::Classification
                                        ? static_cast<std::size_t>(kNumMotionPatterns)
                                        : d.scene.num_classes);
  index.info.set("has_primitives", "0");
  Rng master(d.scene.seed);
  const std::size_t total = d.num_train + d.num_eval;
  for (std::size_t i = 0; i < total; ++i) {
    bool occluded = false;
    const SceneSpec s = sequence_spec(d, i, master.next(), occluded);
    const GeneratedSequence g = generate(s);
    SequenceEntry e;
    e.name = sequence_name(i);
    e.split = i < d.num_train ? "train" : "eval";
    e.action = g.action_class;
    e.scene_type = g.scene_type;
    e.occluded = occluded;
    write_sequence(g.sequence, dir / e.name);
    index.entries.push_back(e);
  }
  write_index(index, dir);
  return index;
}

}  // namespace pptr::data
