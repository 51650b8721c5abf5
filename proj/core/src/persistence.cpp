#include "json_codec.hpp"
#include "unlbench/errors.hpp"

namespace unlbench {

namespace fs = std::filesystem;

namespace {

constexpr int kFormatVersion = 1;

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

Json read_json_file(const fs::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(path.string() + ": invalid JSON: " + e.what());
  }
}

template <typename T>
T json_field(const Json& j, const char* key, const fs::path& where) {
  auto it = j.find(key);
  if (it == j.end()) throw IoError(where.string() + ": missing field '" + key + "'");
  try {
    return it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where.string() + ": field '" + key + "': " + e.what());
  }
}

// Checkpoint tensors, in MlpParams block order.
constexpr std::array<const char*, MlpParams::kBlockCount> kTensorFiles = {
    "W1.ubm1", "b1.ubm1", "W2.ubm1", "b2.ubm1", "Whead.ubm1", "bhead.ubm1"};

}  // namespace

std::vector<std::uint8_t> encode_labels(std::span<const Label> labels) {
  std::vector<std::uint8_t> out(8 + 4 * labels.size());
  const auto n = static_cast<std::uint64_t>(labels.size());
  for (int b = 0; b < 8; ++b) out[b] = static_cast<std::uint8_t>(n >> (8 * b));
  for (std::size_t i = 0; i < labels.size(); ++i)
    for (int b = 0; b < 4; ++b) out[8 + 4 * i + b] = static_cast<std::uint8_t>(labels[i] >> (8 * b));
  return out;
}

std::vector<Label> decode_labels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw IoError("label file shorter than its 8-byte header");
  std::uint64_t n = 0;
  for (int b = 0; b < 8; ++b) n |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
  if (bytes.size() != 8 + 4 * n)
    throw IoError("label file holds " + std::to_string(bytes.size()) + " bytes, header promises " +
                  std::to_string(n) + " labels");
  std::vector<Label> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    Label v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<Label>(bytes[8 + 4 * i + b]) << (8 * b);
    out[i] = v;
  }
  return out;
}

void save_dataset(const fs::path& dir, const Dataset& ds, const std::string& manifest_extra_json) {
  ds.validate();
  ensure_dir(dir);
  write_ubm1(dir / "X.ubm1", ds.x);
  write_file_bytes(dir / "y.u32", encode_labels(ds.y));
  Json m;
  m["version"] = kFormatVersion;
  m["rows"] = ds.x.rows();
  m["cols"] = ds.x.cols();
  m["num_classes"] = ds.num_classes;
  m["class_counts"] = ds.class_counts();
  m["extra"] = parse_json_text(manifest_extra_json, "dataset manifest extra");
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const Json m = read_json_file(mpath);
  Dataset ds;
  ds.x = read_ubm1(dir / "X.ubm1");
  ds.y = decode_labels(read_file_bytes(dir / "y.u32"));
  ds.num_classes = json_field<std::size_t>(m, "num_classes", mpath);
  if (ds.x.rows() != ds.y.size()) throw IoError(dir.string() + ": X and y row counts differ");
  try {
    ds.validate();
  } catch (const Error& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  return ds;
}

void save_universe(const fs::path& dir, const Universe& u, const SyntheticSpec& spec) {
  ensure_dir(dir);
  save_dataset(dir / "train", u.train);
  save_dataset(dir / "test", u.test);
  write_ubm1(dir / "prototypes.ubm1", u.prototypes);
  Json names = Json::array();
  for (const auto& d : u.downstream) {
    Json extra;
    extra["name"] = d.name;
    extra["anchor_classes"] = d.anchor_classes;
    save_dataset(dir / "downstream" / d.name, d.data, extra.dump());
    write_ubm1(dir / "downstream" / d.name / "prototypes.ubm1", d.prototypes);
    names.push_back(d.name);
  }
  Json m;
  m["version"] = kFormatVersion;
  m["spec"] = to_json(spec);
  m["downstream"] = names;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

static DownstreamDataset load_downstream(const fs::path& dir) {
  DownstreamDataset d;
  d.data = load_dataset(dir);
  const fs::path mpath = dir / "manifest.json";
  const Json extra = json_field<Json>(read_json_file(mpath), "extra", mpath);
  d.name = extra.value("name", dir.filename().string());
  d.anchor_classes = extra.value("anchor_classes", std::vector<std::size_t>{});
  if (fs::exists(dir / "prototypes.ubm1")) d.prototypes = read_ubm1(dir / "prototypes.ubm1");
  return d;
}

Universe load_universe(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const Json m = read_json_file(mpath);
  Universe u;
  u.train = load_dataset(dir / "train");
  u.test = load_dataset(dir / "test");
  u.prototypes = read_ubm1(dir / "prototypes.ubm1");
  for (const auto& name : json_field<std::vector<std::string>>(m, "downstream", mpath))
    u.downstream.push_back(load_downstream(dir / "downstream" / name));
  return u;
}

void save_split(const fs::path& dir, const ForgetSplit& split) {
  ensure_dir(dir);
  save_dataset(dir / "df", split.forget_train);
  save_dataset(dir / "dr", split.retain_train);
  save_dataset(dir / "df_te", split.forget_test);
  save_dataset(dir / "dr_te", split.retain_test);
  Json m;
  m["version"] = kFormatVersion;
  m["num_classes"] = split.num_classes();
  m["forget_classes"] = split.forget_classes;
  m["retain_classes"] = split.retain_classes;
  write_text_file(dir / "split.json", m.dump(2) + "\n");
}

ForgetSplit load_split(const fs::path& dir) {
  const fs::path mpath = dir / "split.json";
  const Json m = read_json_file(mpath);
  ForgetSplit s;
  s.forget_classes = json_field<std::vector<std::size_t>>(m, "forget_classes", mpath);
  s.retain_classes = json_field<std::vector<std::size_t>>(m, "retain_classes", mpath);
  s.forget_train = load_dataset(dir / "df");
  s.retain_train = load_dataset(dir / "dr");
  s.forget_test = load_dataset(dir / "df_te");
  s.retain_test = load_dataset(dir / "dr_te");
  return s;
}

void save_checkpoint(const fs::path& dir, const ModelCheckpoint& ckpt) {
  ckpt.params.validate();
  ensure_dir(dir);
  const auto blocks = ckpt.params.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) write_ubm1(dir / kTensorFiles[b], *blocks[b]);
  const auto& p = ckpt.provenance;
  Json m;
  m["version"] = kFormatVersion;
  m["input_dim"] = ckpt.params.input_dim();
  m["hidden_dim"] = ckpt.params.hidden_dim();
  m["feature_dim"] = ckpt.params.feature_dim();
  m["num_classes"] = ckpt.params.num_classes();
  m["seed"] = p.seed;
  m["config_hash"] = p.config_hash;
  m["parent_hash"] = p.parent_hash;
  m["role"] = p.role;
  m["centroid_hash"] = p.centroid_hash;
  m["params_hash"] = params_hash(ckpt.params);
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

ModelCheckpoint load_checkpoint(const fs::path& dir) {
  const fs::path mpath = dir / "manifest.json";
  const Json m = read_json_file(mpath);
  ModelCheckpoint c;
  auto blocks = c.params.blocks();
  for (std::size_t b = 0; b < blocks.size(); ++b) *blocks[b] = read_ubm1(dir / kTensorFiles[b]);
  try {
    c.params.validate();
  } catch (const Error& e) {
    throw IoError(dir.string() + ": " + e.what());
  }
  c.provenance.seed = json_field<std::uint64_t>(m, "seed", mpath);
  c.provenance.config_hash = json_field<std::string>(m, "config_hash", mpath);
  c.provenance.parent_hash = json_field<std::string>(m, "parent_hash", mpath);
  c.provenance.role = json_field<std::string>(m, "role", mpath);
  c.provenance.centroid_hash = json_field<std::string>(m, "centroid_hash", mpath);
  if (json_field<std::string>(m, "params_hash", mpath) != params_hash(c.params))
    throw IoError(dir.string() + ": tensors do not match the manifest's params_hash");
  return c;
}

}  // namespace unlbench
