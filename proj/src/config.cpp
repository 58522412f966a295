#include "mga/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace mga {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& in, const std::string& source) {
  KeyValueConfig kv;
  kv.source_ = source;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidInput(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw InvalidInput(source + ":" + std::to_string(line_no) + ": empty key");
    if (!kv.entries_.emplace(key, trim(line.substr(eq + 1))).second) {
      throw InvalidInput(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

KeyValueConfig KeyValueConfig::parse_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  return parse(in, source);
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file " + path);
  return parse(in, path);
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = lookup(key);
  return v ? *v : fallback;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || p != v->data() + v->size()) {
    throw InvalidInput(source_ + ": key '" + key + "' expects a non-negative integer, got '" + *v + "'");
  }
  return out;
}

std::size_t KeyValueConfig::get_size(const std::string& key, std::size_t fallback) const {
  return static_cast<std::size_t>(get_u64(key, fallback));
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(*v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v->size() || v->empty()) {
    throw InvalidInput(source_ + ": key '" + key + "' expects a number, got '" + *v + "'");
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  if (*v == "true" || *v == "1" || *v == "on" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "off" || *v == "no") return false;
  throw InvalidInput(source_ + ": key '" + key + "' expects true/false, got '" + *v + "'");
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
  const std::string* v = lookup(key);
  if (!v) return fallback;
  std::vector<std::string> out;
  std::stringstream ss(*v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void KeyValueConfig::reject_unused() const {
  for (const auto& [k, v] : entries_) {
    if (!used_.contains(k)) throw InvalidInput(source_ + ": unknown key '" + k + "'");
  }
}

// ------------------------------------------------------------ run config

RunConfig default_run_config() { return RunConfig{}; }

RunConfig run_config_from(const KeyValueConfig& kv) {
  RunConfig c = default_run_config();
  auto& enc = c.model.encoder;
  enc.d_model = kv.get_size("d_model", enc.d_model);
  enc.num_heads = kv.get_size("num_heads", enc.num_heads);
  enc.num_layers = kv.get_size("num_layers", enc.num_layers);
  enc.d_ff = kv.get_size("d_ff", 4 * enc.d_model);
  enc.max_len = kv.get_size("max_len", enc.max_len);
  enc.eps_norm = kv.get_double("eps_norm", enc.eps_norm);
  enc.eps_row = kv.get_double("eps_row", enc.eps_row);
  enc.validate();

  auto& m = c.model;
  m.d_emb = kv.get_size("d_emb", m.d_emb);
  const std::string pooling = kv.get_string("pooling", "mean");
  if (pooling == "mean") {
    m.pooling = Pooling::mean;
  } else if (pooling == "sep") {
    m.pooling = Pooling::sep;
  } else {
    throw InvalidInput("config: pooling must be 'mean' or 'sep', got '" + pooling + "'");
  }
  m.stream_options.use_lead_graphs = kv.get_bool("lead_graphs", true);
  m.stream_options.sep_connect = kv.get_bool("sep_connect", true);
  m.merge_concepts = kv.get_bool("merge_concepts", true);
  m.node_reduction = kv.get_bool("node_reduction", false);
  m.active_streams = {false, false, false};
  for (const auto& s : kv.get_list("streams", {"ce", "rn", "ss"})) {
    m.active_streams[static_cast<std::size_t>(parse_stream(s))] = true;
  }
  if (m.active_count() == 0) throw InvalidInput("config: 'streams' lists no stream");

  auto& t = c.train;
  t.seed = kv.get_u64("seed", t.seed);
  m.seed = t.seed;
  t.batch_size = kv.get_size("batch_size", t.batch_size);
  if (t.batch_size == 0) throw InvalidInput("config: batch_size must be >= 1");
  t.epochs = kv.get_size("epochs", t.epochs);
  t.grad_clip = kv.get_double("grad_clip", t.grad_clip);
  t.checkpoint_interval = kv.get_size("checkpoint_interval", t.checkpoint_interval);
  t.threads = static_cast<int>(kv.get_size("threads", 0));

  c.adam.lr = kv.get_double("lr", c.adam.lr);
  c.adam.beta1 = kv.get_double("beta1", c.adam.beta1);
  c.adam.beta2 = kv.get_double("beta2", c.adam.beta2);
  c.adam.eps = kv.get_double("adam_eps", c.adam.eps);
  c.word_vectors = kv.get_string("word_vectors", "");

  // Sizes normally taken from the manifest; accepted here so a checkpoint's
  // embedded config is self-contained.
  m.vocab_size = kv.get_size("vocab_size", m.vocab_size);
  m.answer_count = kv.get_size("answer_count", m.answer_count);
  m.region_dim = kv.get_size("region_dim", m.region_dim);
  m.spatial_dim = kv.get_size("spatial_dim", m.spatial_dim);
  kv.reject_unused();
  return c;
}

std::string to_text(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const auto& e = c.model.encoder;
  const auto& m = c.model;
  os << "d_model = " << e.d_model << '\n'
     << "num_heads = " << e.num_heads << '\n'
     << "num_layers = " << e.num_layers << '\n'
     << "d_ff = " << e.d_ff << '\n'
     << "max_len = " << e.max_len << '\n'
     << "eps_norm = " << e.eps_norm << '\n'
     << "eps_row = " << e.eps_row << '\n'
     << "d_emb = " << m.d_emb << '\n'
     << "pooling = " << (m.pooling == Pooling::mean ? "mean" : "sep") << '\n'
     << "lead_graphs = " << (m.stream_options.use_lead_graphs ? "true" : "false") << '\n'
     << "sep_connect = " << (m.stream_options.sep_connect ? "true" : "false") << '\n'
     << "merge_concepts = " << (m.merge_concepts ? "true" : "false") << '\n'
     << "node_reduction = " << (m.node_reduction ? "true" : "false") << '\n';
  os << "streams = ";
  bool first = true;
  for (Stream s : kStreams) {
    if (!m.is_active(s)) continue;
    os << (first ? "" : ",") << stream_name(s);
    first = false;
  }
  os << '\n'
     << "seed = " << c.train.seed << '\n'
     << "batch_size = " << c.train.batch_size << '\n'
     << "epochs = " << c.train.epochs << '\n'
     << "grad_clip = " << c.train.grad_clip << '\n'
     << "checkpoint_interval = " << c.train.checkpoint_interval << '\n'
     << "threads = " << c.train.threads << '\n'
     << "lr = " << c.adam.lr << '\n'
     << "beta1 = " << c.adam.beta1 << '\n'
     << "beta2 = " << c.adam.beta2 << '\n'
     << "adam_eps = " << c.adam.eps << '\n'
     << "vocab_size = " << m.vocab_size << '\n'
     << "answer_count = " << m.answer_count << '\n'
     << "region_dim = " << m.region_dim << '\n'
     << "spatial_dim = " << m.spatial_dim << '\n';
  if (!c.word_vectors.empty()) os << "word_vectors = " << c.word_vectors << '\n';
  return os.str();
}

}  // namespace mga
