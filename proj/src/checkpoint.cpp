#include "mcg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "mcg/nn.hpp"
#include "mcg/training.hpp"

namespace mcg {

namespace {

constexpr uint32_t kFormatVersion = 1;

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void append_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char(v >> (8 * i)));
}

void append_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char(v >> (8 * i)));
}

struct Reader {
  const std::string& data;
  size_t at = 0;
  explicit Reader(const std::string& d) : data(d) {}
  void need(size_t n) const {
    if (at + n > data.size()) fail("checkpoint checksum failure: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(uint8_t(data[at + size_t(i)])) << (8 * i);
    at += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(uint8_t(data[at + size_t(i)])) << (8 * i);
    at += 8;
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string out = data.substr(at, n);
    at += n;
    return out;
  }
};

}  // namespace

void Archive::put_tensor(const std::string& name, const Tensor& t) {
  ArchiveSection s;
  s.type = ArchiveSection::Type::kF64;
  s.tensor = t;
  sections_[name] = std::move(s);
}

void Archive::put_int(const std::string& name, int64_t v) {
  ArchiveSection s;
  s.type = ArchiveSection::Type::kI64;
  s.integer = v;
  sections_[name] = std::move(s);
}

void Archive::put_text(const std::string& name, const std::string& v) {
  ArchiveSection s;
  s.type = ArchiveSection::Type::kText;
  s.text = v;
  sections_[name] = std::move(s);
}

const Tensor& Archive::tensor(const std::string& name) const {
  auto it = sections_.find(name);
  if (it == sections_.end() || it->second.type != ArchiveSection::Type::kF64)
    fail("archive section missing or not an array: " + name);
  return it->second.tensor;
}

int64_t Archive::integer(const std::string& name) const {
  auto it = sections_.find(name);
  if (it == sections_.end() || it->second.type != ArchiveSection::Type::kI64)
    fail("archive section missing or not an integer: " + name);
  return it->second.integer;
}

const std::string& Archive::text(const std::string& name) const {
  auto it = sections_.find(name);
  if (it == sections_.end() || it->second.type != ArchiveSection::Type::kText)
    fail("archive section missing or not text: " + name);
  return it->second.text;
}

void Archive::save(const std::string& path) const {
  std::string body = "MCGC";
  append_u32(body, kFormatVersion);
  append_u32(body, uint32_t(sections_.size()));
  for (const auto& [name, s] : sections_) {
    append_u32(body, uint32_t(name.size()));
    body += name;
    body.push_back(char(s.type));
    switch (s.type) {
      case ArchiveSection::Type::kF64: {
        append_u32(body, uint32_t(s.tensor.rows()));
        append_u32(body, uint32_t(s.tensor.cols()));
        const uint64_t nbytes = uint64_t(s.tensor.size()) * 8;
        append_u64(body, nbytes);
        const size_t at = body.size();
        body.resize(at + nbytes);
        std::memcpy(body.data() + at, s.tensor.data(), nbytes);
        break;
      }
      case ArchiveSection::Type::kI64: {
        append_u32(body, 1);
        append_u32(body, 1);
        append_u64(body, 8);
        append_u64(body, uint64_t(s.integer));
        break;
      }
      case ArchiveSection::Type::kText: {
        append_u32(body, 1);
        append_u32(body, uint32_t(s.text.size()));
        append_u64(body, s.text.size());
        body += s.text;
        break;
      }
    }
  }
  const uint64_t checksum = fnv1a64(body);
  body += "CRCC";
  append_u64(body, checksum);

  std::ofstream out(path, std::ios::binary);
  if (!out) fail("cannot write checkpoint: " + path);
  out.write(body.data(), std::streamsize(body.size()));
  if (!out) fail("write failure: " + path);
}

Archive Archive::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 24 || data.substr(0, 4) != "MCGC")
    fail("not a checkpoint file: " + path);
  // Verify the trailer before trusting any section payload.
  if (data.substr(data.size() - 12, 4) != "CRCC")
    fail("checkpoint checksum failure: missing trailer in " + path);
  {
    Reader tail(data);
    tail.at = data.size() - 8;
    const uint64_t stored = tail.u64();
    if (stored != fnv1a64(data.substr(0, data.size() - 12)))
      fail("checkpoint checksum failure: " + path);
  }
  Reader r(data);
  r.at = 4;
  const uint32_t version = r.u32();
  if (version != kFormatVersion)
    fail("unsupported checkpoint version " + std::to_string(version) + " (expected " +
         std::to_string(kFormatVersion) + ")");
  const uint32_t count = r.u32();
  Archive a;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = r.u32();
    const std::string name = r.bytes(name_len);
    const auto type = ArchiveSection::Type(uint8_t(r.bytes(1)[0]));
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    const uint64_t nbytes = r.u64();
    switch (type) {
      case ArchiveSection::Type::kF64: {
        if (nbytes != uint64_t(rows) * cols * 8) fail("corrupt array section: " + name);
        Tensor t(static_cast<int>(rows), static_cast<int>(cols));
        const std::string payload = r.bytes(nbytes);
        std::memcpy(t.data(), payload.data(), nbytes);
        a.put_tensor(name, t);
        break;
      }
      case ArchiveSection::Type::kI64:
        a.put_int(name, int64_t(r.u64()));
        break;
      case ArchiveSection::Type::kText:
        a.put_text(name, r.bytes(nbytes));
        break;
      default:
        fail("unknown section type in " + path);
    }
  }
  return a;
}

void save_checkpoint(const std::string& path, const ParameterTree& params,
                     const AdamWState* opt_state, int64_t step, const std::string& config_text,
                     const std::string& vocab_text) {
  Archive a;
  for (const auto& [name, var] : params.entries()) a.put_tensor("param." + name, var->value);
  if (opt_state) {
    for (const auto& [name, t] : opt_state->m) a.put_tensor("adam.m." + name, t);
    for (const auto& [name, t] : opt_state->v) a.put_tensor("adam.v." + name, t);
    for (const auto& [name, t] : opt_state->step_count)
      a.put_int("adam.t." + name, t);
  }
  a.put_int("meta.step", step);
  a.put_text("meta.config", config_text);
  a.put_text("meta.vocab", vocab_text);
  a.save(path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  LoadedCheckpoint lc;
  lc.archive = Archive::load(path);
  lc.step = lc.archive.integer("meta.step");
  lc.config_text = lc.archive.text("meta.config");
  lc.vocab_text = lc.archive.text("meta.vocab");
  return lc;
}

std::string restore_parameters(ParameterTree& params, const Archive& archive, bool strict) {
  size_t matched = 0;
  std::string report;
  for (const auto& [name, var] : params.entries()) {
    const std::string key = "param." + name;
    if (!archive.has(key)) {
      if (strict) fail("checkpoint missing parameter: " + name);
      report += "missing " + name + "\n";
      continue;
    }
    const Tensor& t = archive.tensor(key);
    if (!t.same_shape(var->value)) {
      if (strict)
        fail("checkpoint shape mismatch for " + name + ": " + t.shape_str() + " vs " +
             var->value.shape_str());
      report += "shape mismatch " + name + "\n";
      continue;
    }
    var->value = t;
    ++matched;
  }
  report = "restored " + std::to_string(matched) + "/" +
           std::to_string(params.entries().size()) + " arrays\n" + report;
  return report;
}

AdamWState load_adamw_state(const Archive& archive) {
  AdamWState state;
  for (const auto& [key, sec] : archive.sections()) {
    if (key.rfind("adam.m.", 0) == 0)
      state.m[key.substr(7)] = sec.tensor;
    else if (key.rfind("adam.v.", 0) == 0)
      state.v[key.substr(7)] = sec.tensor;
    else if (key.rfind("adam.t.", 0) == 0)
      state.step_count[key.substr(7)] = sec.integer;
  }
  return state;
}

std::string import_weights(ParameterTree& params, const std::string& path) {
  Archive a = Archive::load(path);
  size_t matched = 0, mismatched = 0;
  std::string report;
  std::vector<std::string> unmatched_archive;
  for (const auto& [key, sec] : a.sections()) {
    if (sec.type != ArchiveSection::Type::kF64) continue;
    std::string name = key;
    if (name.rfind("param.", 0) == 0) name = name.substr(6);
    if (!params.has(name)) {
      unmatched_archive.push_back(name);
      continue;
    }
    Var var = params.get(name);
    if (!a.tensor(key).same_shape(var->value)) {
      report += "  shape mismatch: " + name + " " + a.tensor(key).shape_str() + " vs " +
                var->value.shape_str() + "\n";
      ++mismatched;
      continue;
    }
    var->value = a.tensor(key);
    ++matched;
  }
  std::string head = "weight import: matched " + std::to_string(matched) + ", shape-mismatched " +
                     std::to_string(mismatched) + ", unmatched-in-archive " +
                     std::to_string(unmatched_archive.size()) + "\n";
  for (const auto& n : unmatched_archive) head += "  unmatched: " + n + "\n";
  return head + report;
}

}  // namespace mcg
