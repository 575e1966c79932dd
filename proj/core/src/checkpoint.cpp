// SPDX-License-Identifier: Apache-2.0
#include "moep/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "moep/errors.hpp"

namespace moep {

namespace {

constexpr char kMagic[4] = {'M', 'O', 'E', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void append_pod(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T read_pod(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) throw IoError("checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void append_record(std::string& body, const std::string& name, const Tensor& t) {
  append_pod<std::uint64_t>(body, name.size());
  body.append(name);
  append_pod<std::uint32_t>(body, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) append_pod<std::uint64_t>(body, d);
  const std::size_t bytes = t.size() * sizeof(double);
  const std::size_t off = body.size();
  body.resize(off + bytes);
  std::memcpy(body.data() + off, t.data(), bytes);
}

std::pair<std::string, Tensor> read_record(const std::string& buf, std::size_t& off) {
  const auto name_len = read_pod<std::uint64_t>(buf, off);
  if (off + name_len > buf.size()) throw IoError("checkpoint truncated in record name");
  std::string name(buf.data() + off, name_len);
  off += name_len;
  const auto rank = read_pod<std::uint32_t>(buf, off);
  std::vector<std::size_t> shape;
  for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(read_pod<std::uint64_t>(buf, off));
  Tensor t(shape);
  const std::size_t bytes = t.size() * sizeof(double);
  if (off + bytes > buf.size()) throw IoError("checkpoint truncated in record payload");
  std::memcpy(t.data(), buf.data() + off, bytes);
  off += bytes;
  return {std::move(name), std::move(t)};
}

std::string state_text(const CheckpointState& s) {
  std::ostringstream os;
  os << "state.step=" << s.step << "\n";
  os << "state.rng_counter=" << s.rng_counter << "\n";
  os << "state.phase=" << s.phase << "\n";
  os << "state.subtask=" << s.subtask << "\n";
  os << "state.run_seed=" << s.run_seed << "\n";
  os << "state.adam_step=" << s.opt.step << "\n";
  os << "state.window_index=" << s.schedule.window_index << "\n";
  os << "state.clamp=" << s.schedule.clamp_activations << "\n";
  os << "state.num_layers=" << s.schedule.survivors.size() << "\n";
  for (std::size_t l = 0; l < s.schedule.survivors.size(); ++l) {
    os << "state.survivors." << l << "=";
    bool first = true;
    for (std::size_t e = 0; e < s.schedule.survivors[l].size(); ++e) {
      if (!s.schedule.survivors[l][e]) continue;
      if (!first) os << ",";
      os << e;
      first = false;
    }
    os << "\n";
    os << "state.finalized." << l << "=" << (s.schedule.finalized[l] ? 1 : 0) << "\n";
  }
  os << "state.num_events=" << s.schedule.events.size() << "\n";
  for (std::size_t i = 0; i < s.schedule.events.size(); ++i) {
    os << "state.event." << i << "=" << s.schedule.events[i].serialize() << "\n";
  }
  return os.str();
}

}  // namespace

std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

void save_checkpoint(const std::string& path, CheckpointState& state) {
  std::string body;
  const std::string text = state.config.serialize() + state_text(state);
  append_pod<std::uint64_t>(body, text.size());
  body.append(text);

  std::string records;
  std::uint64_t count = 0;
  std::size_t idx = 0;
  for_each_param(state.model, [&](const ParamInfo& p) {
    append_record(records, p.name, *p.tensor);
    append_record(records, "adam.m." + p.name, state.opt.m[idx]);
    append_record(records, "adam.v." + p.name, state.opt.v[idx]);
    ++idx;
    count += 3;
  });
  for (std::size_t l = 0; l < state.ledger.layers.size(); ++l) {
    const LayerLedger& ll = state.ledger.layers[l];
    const std::string p = "ledger." + std::to_string(l) + ".";
    append_record(records, p + "alpha_sum", Tensor({ll.alpha_sum.size()}, ll.alpha_sum));
    std::vector<double> hits(ll.hit_count.begin(), ll.hit_count.end());
    const std::size_t num_hits = hits.size();
    append_record(records, p + "hit_count", Tensor({num_hits}, std::move(hits)));
    append_record(records, p + "token_count", Tensor::scalar(static_cast<double>(ll.token_count)));
    count += 3;
  }
  append_pod<std::uint64_t>(body, count);
  body.append(records);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, 4);
  std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  const std::uint64_t sum = fnv1a64(body.data(), body.size());
  out.write(reinterpret_cast<const char*>(&sum), sizeof(sum));
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

CheckpointState load_checkpoint(const std::string& path, const ModelConfig* expect) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string file = ss.str();
  if (file.size() < 4 + sizeof(std::uint32_t) + sizeof(std::uint64_t) ||
      std::memcmp(file.data(), kMagic, 4) != 0) {
    throw IoError("not a checkpoint file: " + path);
  }
  std::size_t off = 4;
  const auto version = read_pod<std::uint32_t>(file, off);
  if (version != kVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::size_t body_start = off;
  const std::size_t body_len = file.size() - body_start - sizeof(std::uint64_t);
  std::size_t sum_off = body_start + body_len;
  const auto stored_sum = read_pod<std::uint64_t>(file, sum_off);
  if (fnv1a64(file.data() + body_start, body_len) != stored_sum) {
    throw IoError("checkpoint checksum mismatch: " + path);
  }

  const auto text_len = read_pod<std::uint64_t>(file, off);
  if (off + text_len > file.size()) throw IoError("checkpoint truncated in text section");
  const std::string text(file.data() + off, text_len);
  off += text_len;

  // Split config lines from state lines.
  std::string config_text;
  std::map<std::string, std::string> state_kv;
  {
    std::istringstream ts(text);
    std::string line;
    while (std::getline(ts, line)) {
      if (line.rfind("state.", 0) == 0) {
        const auto eq = line.find('=');
        state_kv[line.substr(0, eq)] = line.substr(eq + 1);
      } else {
        config_text += line + "\n";
      }
    }
  }

  CheckpointState s;
  s.config = RunConfig::parse(config_text);
  if (expect && !(*expect == s.config.model)) {
    throw ConfigError("checkpoint model config does not match the expected config");
  }

  auto need = [&](const std::string& key) -> const std::string& {
    auto it = state_kv.find(key);
    if (it == state_kv.end()) throw IoError("checkpoint missing state key " + key);
    return it->second;
  };
  s.step = std::stoull(need("state.step"));
  s.rng_counter = std::stoull(need("state.rng_counter"));
  s.phase = need("state.phase");
  s.subtask = std::stoi(need("state.subtask"));
  s.run_seed = std::stoull(need("state.run_seed"));

  Rng init_rng(0);  // placeholder init, every tensor is overwritten below
  s.model = Model::init(s.config.model, init_rng);
  s.opt = OptimizerState::make(s.model, s.config.opt);  // lr schedule fields refilled by trainer
  s.opt.step = std::stoull(need("state.adam_step"));

  const std::size_t num_layers = std::stoull(need("state.num_layers"));
  s.schedule = ScheduleState::make(num_layers, s.config.model.num_experts);
  s.schedule.window_index = std::stoull(need("state.window_index"));
  s.schedule.clamp_activations = std::stoull(need("state.clamp"));
  for (std::size_t l = 0; l < num_layers; ++l) {
    const std::string& ids = need("state.survivors." + std::to_string(l));
    std::vector<bool> mask(s.config.model.num_experts, false);
    std::istringstream is(ids);
    std::string tok;
    while (std::getline(is, tok, ',')) mask[std::stoull(tok)] = true;
    s.schedule.survivors[l] = mask;
    s.schedule.finalized[l] = need("state.finalized." + std::to_string(l)) == "1";
  }
  const std::size_t num_events = std::stoull(need("state.num_events"));
  for (std::size_t i = 0; i < num_events; ++i) {
    s.schedule.events.push_back(PruneEvent::parse(need("state.event." + std::to_string(i))));
  }
  s.ledger = ProficiencyLedger::make(num_layers, s.config.model.num_experts);

  // Apply survivor masks to the model.
  {
    std::size_t l = 0;
    for (Block& blk : s.model.blocks) {
      if (blk.is_moe()) blk.moe().active_mask = s.schedule.survivors[l++];
    }
  }

  std::map<std::string, Tensor*> slots;
  std::size_t idx = 0;
  for_each_param(s.model, [&](const ParamInfo& p) {
    slots[p.name] = p.tensor;
    slots["adam.m." + p.name] = &s.opt.m[idx];
    slots["adam.v." + p.name] = &s.opt.v[idx];
    ++idx;
  });
  const auto count = read_pod<std::uint64_t>(file, off);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto [name, tensor] = read_record(file, off);
    if (name.rfind("ledger.", 0) == 0) {
      std::istringstream ns(name.substr(7));
      std::size_t layer = 0;
      ns >> layer;
      std::string field;
      std::getline(ns, field);  // ".alpha_sum" etc.
      LayerLedger& ll = s.ledger.layers.at(layer);
      if (field == ".alpha_sum") ll.alpha_sum = tensor.vec();
      else if (field == ".hit_count") {
        ll.hit_count.assign(tensor.size(), 0);
        for (std::size_t j = 0; j < tensor.size(); ++j)
          ll.hit_count[j] = static_cast<std::size_t>(tensor[j]);
      } else if (field == ".token_count") ll.token_count = static_cast<std::size_t>(tensor[0]);
      else throw IoError("unknown ledger record " + name);
      continue;
    }
    auto it = slots.find(name);
    if (it == slots.end()) throw IoError("unexpected checkpoint record " + name);
    if (!it->second->same_shape(tensor)) throw IoError("checkpoint record shape mismatch at " + name);
    *it->second = std::move(tensor);
  }
  if (off != body_start + body_len) throw IoError("checkpoint has trailing bytes");
  return s;
}

}  // namespace moep
