#include "openrel/train/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "openrel/core/errors.hpp"

namespace openrel::train {

using nlohmann::json;

json to_json(const EpochStats& s) {
  return json{{"epoch", s.epoch},     {"lr", s.lr},           {"loss", s.loss},
              {"exist_loss", s.exist_loss}, {"lm_loss", s.lm_loss}, {"steps", s.steps},
              {"positive_relations", s.positive_relations}};
}

namespace {

EpochStats stats_from_json(const json& j) {
  EpochStats s;
  s.epoch = j.at("epoch").get<int>();
  s.lr = j.at("lr").get<double>();
  s.loss = j.at("loss").get<double>();
  s.exist_loss = j.at("exist_loss").get<double>();
  s.lm_loss = j.at("lm_loss").get<double>();
  s.steps = j.at("steps").get<int>();
  s.positive_relations = j.at("positive_relations").get<std::vector<std::string>>();
  return s;
}

struct Entry {
  std::string kind;
  std::string name;
  const ad::Mat* value;
};

template <typename T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainConfig& config,
                     const TrainState& state) {
  std::vector<Entry> entries;
  for (const auto& [name, p] : model.params().items()) entries.push_back({"param", name, &p.value});
  for (const auto& [name, m] : state.optimizer.first_moments()) entries.push_back({"adam_m", name, &m});
  for (const auto& [name, v] : state.optimizer.second_moments()) entries.push_back({"adam_v", name, &v});

  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    dir.push_back({{"kind", e.kind},
                   {"name", e.name},
                   {"rows", e.value->rows()},
                   {"cols", e.value->cols()},
                   {"offset", offset}});
    offset += static_cast<std::uint64_t>(e.value->size());
  }
  json history = json::array();
  for (const auto& h : state.history) history.push_back(to_json(h));

  json header{{"model", to_json(model.config())},
              {"train", to_json(config)},
              {"epoch", state.epoch},
              {"history", history},
              {"vocab", model.vocab().tokens()},
              {"relations", {{"base", model.relations().base}, {"novel", model.relations().novel}}},
              {"object_classes", model.object_classes()},
              {"tensors", dir},
              {"optimizer", {{"steps", state.optimizer.steps()}}},
              {"rng", rng_to_string(state.rng)}};
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod<std::uint32_t>(out, kCheckpointVersion);
  write_pod<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& e : entries) {
    out.write(reinterpret_cast<const char*>(e.value->data()),
              static_cast<std::streamsize>(e.value->size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ValidationError(path.string() + " is not a checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  const auto len = read_pod<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ValidationError("checkpoint: truncated header");

  LoadedCheckpoint ck;
  try {
    ck.header = json::parse(text);
    const auto& h = ck.header;
    const ModelConfig mc = model_config_from_json(h.at("model"));
    ck.train_config = train_config_from_json(h.at("train"));
    const auto rel = make_relation_vocabulary(h.at("relations").at("base").get<std::vector<std::string>>(),
                                              h.at("relations").at("novel").get<std::vector<std::string>>());
    ck.model = std::make_unique<Model>(mc, rel, h.at("object_classes").get<std::vector<std::string>>(),
                                       text::TextVocabulary::from_tokens(h.at("vocab").get<std::vector<std::string>>()));
    ad::AdamWConfig ac;
    ac.weight_decay = ck.train_config.weight_decay;
    ck.state.optimizer = ad::AdamW(ac);
    ck.state.optimizer.set_steps(h.at("optimizer").at("steps").get<std::int64_t>());
    ck.state.epoch = h.at("epoch").get<int>();
    for (const auto& s : h.at("history")) ck.state.history.push_back(stats_from_json(s));
    ck.state.rng = rng_from_string(h.at("rng").get<std::string>());

    for (const auto& d : h.at("tensors")) {
      ad::Mat m(d.at("rows").get<Eigen::Index>(), d.at("cols").get<Eigen::Index>());
      in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
      if (!in) throw ValidationError("checkpoint: truncated tensor data");
      const auto kind = d.at("kind").get<std::string>();
      const auto name = d.at("name").get<std::string>();
      if (kind == "param") {
        ck.model->params().add(name, std::move(m));
      } else if (kind == "adam_m") {
        ck.state.optimizer.first_moments()[name] = std::move(m);
      } else if (kind == "adam_v") {
        ck.state.optimizer.second_moments()[name] = std::move(m);
      } else {
        throw ValidationError("checkpoint: unknown tensor kind '" + kind + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

}  // namespace openrel::train
