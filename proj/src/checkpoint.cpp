#include "ndvg/checkpoint.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace ndvg {

namespace {

constexpr uint32_t kVersion = 1;

ordered_json bbox_json(const Aabb<real>& b) {
  return {{"min", {b.min[0], b.min[1], b.min[2]}}, {"max", {b.max[0], b.max[1], b.max[2]}}};
}

Aabb<real> bbox_from_json(const ordered_json& j) {
  Aabb<real> b;
  for (int c = 0; c < 3; ++c) {
    b.min[c] = j.at("min")[c].get<real>();
    b.max[c] = j.at("max")[c].get<real>();
  }
  b.validate();
  return b;
}

ordered_json res_json(const Vec3i& r) { return {r[0], r[1], r[2]}; }

Vec3i res_from_json(const ordered_json& j) {
  return Vec3i(j[0].get<int>(), j[1].get<int>(), j[2].get<int>());
}

struct TensorRecord {
  std::string name;
  std::vector<long long> shape;
  const real* data;
  size_t count;
};

}  // namespace

void save_checkpoint(const std::string& path, Model<real>& model,
                     const CheckpointExtra& extra) {
  std::vector<TensorRecord> records;
  for (const auto& t : param_tensors(model))
    records.push_back({t.name, t.shape, t.values, t.size});
  std::vector<std::vector<real>> mask_buffers;  // keeps converted masks alive
  auto add_mask = [&](const OccupancyCache<real>& m, const std::string& name) {
    auto& buf = mask_buffers.emplace_back();
    buf.reserve(m.occ.size());
    for (uint8_t v : m.occ) buf.push_back(real(v));
    records.push_back({name, {m.res[0], m.res[1], m.res[2]}, buf.data(), buf.size()});
  };
  if (extra.deform_mask) add_mask(*extra.deform_mask, "filter.deform.occ");
  if (extra.canon_mask) add_mask(*extra.canon_mask, "filter.canon.occ");

  ordered_json header;
  header["magic"] = "ndvg-checkpoint";
  header["version"] = kVersion;
  ordered_json tensors = ordered_json::array();
  uint64_t offset = 0;
  for (const auto& r : records) {
    tensors.push_back({{"name", r.name},
                       {"shape", r.shape},
                       {"dtype", "f32"},
                       {"offset", offset}});
    offset += r.count * sizeof(real);
  }
  header["tensors"] = tensors;

  ordered_json meta;
  meta["stage"] = model.stage() == Stage::Fine ? "fine" : "coarse";
  meta["t_can"] = model.deform.t_can;
  meta["deform"] = {{"res", res_json(model.deform.grid.res)},
                    {"channels", model.deform.grid.channels},
                    {"bbox", bbox_json(model.deform.grid.bbox)},
                    {"pos_freqs", model.deform.pos_enc.num_freqs},
                    {"time_freqs", model.deform.time_enc.num_freqs}};
  meta["canonical"] = {{"density_res", res_json(model.canonical.density_grid.res)},
                       {"color_res", res_json(model.canonical.color_grid.res)},
                       {"color_channels", model.canonical.color_grid.channels},
                       {"bbox", bbox_json(model.canonical.density_grid.bbox)},
                       {"density_shift", model.canonical.density_shift},
                       {"pos_freqs", model.canonical.pos_enc.num_freqs},
                       {"dir_freqs", model.canonical.dir_enc.num_freqs}};
  if (extra.deform_mask) meta["deform_mask_bbox"] = bbox_json(extra.deform_mask->bbox);
  if (extra.canon_mask) meta["canon_mask_bbox"] = bbox_json(extra.canon_mask->bbox);
  ordered_json cfg = ordered_json::object();
  for (const auto& [k, v] : extra.config) cfg[k] = v;
  meta["config"] = cfg;
  header["meta"] = meta;

  const std::string header_str = header.dump();
  const uint64_t header_len = header_str.size();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    check(out.good(), "cannot write checkpoint '" + path + "'");
    uint8_t len_bytes[8];
    for (int i = 0; i < 8; ++i) len_bytes[i] = uint8_t((header_len >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(len_bytes), 8);
    out.write(header_str.data(), std::streamsize(header_str.size()));
    for (const auto& r : records)
      out.write(reinterpret_cast<const char*>(r.data),
                std::streamsize(r.count * sizeof(real)));
    check(out.good(), "write failed for checkpoint '" + path + "'");
  }
  fs::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open checkpoint '" + path + "'");
  uint8_t len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  check(in.gcount() == 8, "checkpoint '" + path + "' is truncated");
  uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= uint64_t(len_bytes[i]) << (8 * i);
  check(header_len > 0 && header_len < (1ull << 24), "checkpoint '" + path +
                                                         "' has an implausible header size");
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), std::streamsize(header_len));
  check(uint64_t(in.gcount()) == header_len, "checkpoint '" + path + "' is truncated");
  ordered_json header;
  try {
    header = ordered_json::parse(header_str);
  } catch (const std::exception& e) {
    check(false, "checkpoint '" + path + "' header is not valid JSON: " + std::string(e.what()));
  }
  check(header.value("magic", "") == "ndvg-checkpoint",
        "'" + path + "' is not a checkpoint file");
  check(header.value("version", 0u) == kVersion, "checkpoint '" + path +
                                                     "' has an unsupported version");

  const ordered_json& meta = header.at("meta");
  const bool fine = meta.at("stage").get<std::string>() == "fine";
  const auto& dj = meta.at("deform");
  const auto& cj = meta.at("canonical");

  LoadedCheckpoint lc;
  lc.model.deform = make_deformation_field<real>(
      bbox_from_json(dj.at("bbox")), res_from_json(dj.at("res")), dj.at("channels").get<int>(),
      meta.at("t_can").get<real>(), 0);
  lc.model.canonical = make_canonical_field<real>(
      bbox_from_json(cj.at("bbox")), res_from_json(cj.at("density_res")),
      res_from_json(cj.at("color_res")), fine ? Stage::Fine : Stage::Coarse,
      cj.at("density_shift").get<real>(), 0);
  check(lc.model.deform.pos_enc.num_freqs == dj.at("pos_freqs").get<int>() &&
            lc.model.deform.time_enc.num_freqs == dj.at("time_freqs").get<int>() &&
            lc.model.canonical.pos_enc.num_freqs == cj.at("pos_freqs").get<int>() &&
            lc.model.canonical.dir_enc.num_freqs == cj.at("dir_freqs").get<int>() &&
            lc.model.canonical.color_grid.channels == cj.at("color_channels").get<int>(),
        "checkpoint '" + path + "' was produced by an incompatible build");

  if (meta.contains("config"))
    for (const auto& [k, v] : meta.at("config").items())
      lc.extra.config[k] = v.get<std::string>();

  // index payload tensors by name
  std::map<std::string, std::pair<uint64_t, std::vector<long long>>> index;
  for (const auto& t : header.at("tensors")) {
    check(t.at("dtype").get<std::string>() == "f32",
          "checkpoint '" + path + "' tensor '" + t.at("name").get<std::string>() +
              "' has unsupported dtype");
    index[t.at("name").get<std::string>()] = {t.at("offset").get<uint64_t>(),
                                              t.at("shape").get<std::vector<long long>>()};
  }
  const uint64_t payload_start = 8 + header_len;
  auto read_tensor = [&](const std::string& name, real* dst, size_t count,
                         const std::vector<long long>& want_shape) {
    const auto it = index.find(name);
    check(it != index.end(), "checkpoint '" + path + "' is missing tensor '" + name + "'");
    check(it->second.second == want_shape,
          "checkpoint '" + path + "' tensor '" + name + "' has mismatched shape");
    in.seekg(std::streamoff(payload_start + it->second.first));
    in.read(reinterpret_cast<char*>(dst), std::streamsize(count * sizeof(real)));
    check(uint64_t(in.gcount()) == count * sizeof(real),
          "checkpoint '" + path + "' tensor '" + name + "' is truncated");
  };
  for (auto& t : param_tensors(lc.model)) read_tensor(t.name, t.values, t.size, t.shape);

  auto read_mask = [&](const std::string& name, const char* bbox_key)
      -> std::optional<OccupancyCache<real>> {
    const auto it = index.find(name);
    if (it == index.end()) return std::nullopt;
    const auto& shape = it->second.second;
    check(shape.size() == 3, "checkpoint '" + path + "' mask '" + name + "' must be 3-D");
    OccupancyCache<real> m(Vec3i{int(shape[0]), int(shape[1]), int(shape[2])},
                           bbox_from_json(meta.at(bbox_key)));
    std::vector<real> buf(m.occ.size());
    read_tensor(name, buf.data(), buf.size(), shape);
    for (size_t i = 0; i < buf.size(); ++i) m.occ[i] = buf[i] != real(0) ? 1 : 0;
    return m;
  };
  lc.extra.deform_mask = read_mask("filter.deform.occ", "deform_mask_bbox");
  lc.extra.canon_mask = read_mask("filter.canon.occ", "canon_mask_bbox");
  return lc;
}

}  // namespace ndvg
