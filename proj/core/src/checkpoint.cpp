#include <bit>
#include <cstring>

#include "prefalign/model.hpp"

namespace prefalign {

namespace {

constexpr char kMagic[8] = {'P', 'F', 'A', 'L', 'I', 'G', 'N', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw FormatError("checkpoint truncated");
  T v;
  std::memcpy(&v, bytes.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string checkpoint_bytes(const DecoderModel& model, const json& extra) {
  json blocks = json::array();
  for (const auto& b : model.params().blocks()) {
    blocks.push_back({{"name", b.name}, {"shape", b.shape}, {"trainable", b.trainable}});
  }
  json header = {{"head", model.head_kind() == HeadKind::LanguageModel ? "lm" : "scalar"},
                 {"config", model.config().to_json()},
                 {"adapter", model.adapter() ? model.adapter()->to_json() : json(nullptr)},
                 {"adapter_enabled", model.adapter_enabled()},
                 {"frozen", model.frozen()},
                 {"blocks", blocks},
                 {"extra", extra}};
  const std::string h = header.dump();
  const auto& values = model.params().all_values();
  std::string out;
  out.reserve(8 + 4 + 8 + h.size() + values.size() * sizeof(double));
  out.append(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const DecoderModel& model, const json& extra) {
  write_file_atomic(path, checkpoint_bytes(model, extra));
}

LoadedCheckpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto hlen = take<std::uint64_t>(bytes, pos);
  if (hlen > bytes.size() - pos) throw FormatError("checkpoint truncated");
  json header;
  try {
    header = json::parse(bytes.substr(pos, hlen));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint header: ") + e.what());
  }
  pos += hlen;

  const ModelConfig cfg = ModelConfig::from_json(header.at("config"));
  LoadedCheckpoint out;
  DecoderModel* m = nullptr;
  if (header.at("head") == "lm") {
    out.policy = std::make_unique<PolicyModel>(cfg);
    m = out.policy.get();
  } else {
    out.reward = std::make_unique<RewardModel>(cfg);
    m = out.reward.get();
  }
  if (!header.at("adapter").is_null()) m->apply_adapter(AdapterSpec::from_json(header.at("adapter")));
  m->set_adapter_enabled(header.value("adapter_enabled", m->has_adapter()));
  if (header.value("frozen", false)) m->freeze();

  auto& blocks = m->params().blocks();
  const auto& hb = header.at("blocks");
  if (hb.size() != blocks.size()) throw FormatError("checkpoint block count does not match its config");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    if (hb[i].at("name") != blocks[i].name ||
        hb[i].at("shape").get<std::vector<std::size_t>>() != blocks[i].shape) {
      throw FormatError("checkpoint block " + hb[i].at("name").get<std::string>() + " does not match");
    }
    blocks[i].trainable = hb[i].value("trainable", true);
  }
  auto& values = m->params().all_values();
  if (bytes.size() - pos != values.size() * sizeof(double)) {
    throw FormatError("checkpoint payload has " + std::to_string(bytes.size() - pos) + " bytes, expected " +
                      std::to_string(values.size() * sizeof(double)));
  }
  std::memcpy(values.data(), bytes.data() + pos, values.size() * sizeof(double));
  out.header = std::move(header);
  return out;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace prefalign
