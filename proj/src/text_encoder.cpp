#include "mcg/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace mcg {

namespace {

const std::pair<const char*, int Vocabulary::*> kReservedRoles[] = {
    {"pad", &Vocabulary::pad_id}, {"unk", &Vocabulary::unk_id}, {"cls", &Vocabulary::cls_id},
    {"sep", &Vocabulary::sep_id}, {"mask", &Vocabulary::mask_id}, {"gen", &Vocabulary::gen_id},
    {"eos", &Vocabulary::eos_id}};

}  // namespace

Vocabulary Vocabulary::parse(const std::string& text) {
  Vocabulary v;
  std::unordered_map<std::string, std::string> role_tokens;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("#reserved", 0) == 0) {
      std::istringstream hdr(line.substr(9));
      std::string pair;
      while (hdr >> pair) {
        const auto eq = pair.find('=');
        if (eq == std::string::npos) fail("vocabulary header entry missing '=': " + pair);
        role_tokens[pair.substr(0, eq)] = pair.substr(eq + 1);
      }
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    if (v.ids_.count(line)) fail("duplicate vocabulary token: " + line);
    v.ids_[line] = int(v.tokens_.size());
    v.tokens_.push_back(line);
  }
  for (const auto& [role, member] : kReservedRoles) {
    auto it = role_tokens.find(role);
    if (it == role_tokens.end()) fail(std::string("vocabulary missing reserved role: ") + role);
    const int id = v.id_of(it->second);
    if (id < 0) fail("reserved token not in vocabulary body: " + it->second);
    v.*member = id;
  }
  // Reserved ids must be pairwise distinct.
  std::vector<int> ids{v.pad_id, v.unk_id, v.cls_id, v.sep_id, v.mask_id, v.gen_id, v.eos_id};
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    fail("reserved vocabulary ids are not distinct");
  return v;
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open vocabulary file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::string Vocabulary::to_text() const {
  std::string out = "#reserved";
  for (const auto& [role, member] : kReservedRoles)
    out += std::string(" ") + role + "=" + tokens_[size_t(this->*member)];
  out += "\n";
  for (const auto& t : tokens_) out += t + "\n";
  return out;
}

int Vocabulary::id_of(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? -1 : it->second;
}

const std::string& Vocabulary::token_of(int id) const {
  if (id < 0 || id >= size()) fail("vocabulary overflow: id " + std::to_string(id));
  return tokens_[size_t(id)];
}

bool Vocabulary::is_reserved(int id) const {
  return id == pad_id || id == unk_id || id == cls_id || id == sep_id || id == mask_id ||
         id == gen_id || id == eos_id;
}

const std::string& toy_vocabulary_text() {
  static const std::string text =
      "#reserved pad=[PAD] unk=[UNK] cls=[CLS] sep=[SEP] mask=[MASK] gen=[GEN] eos=[EOS]\n"
      "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n[GEN]\n[EOS]\n"
      "what\nis\nthe\nman\ndoing\nwoman\nchild\ndog\ncat\nbird\nhorse\n"
      "run\nrunning\nwalk\nwalking\njump\njumping\nswim\nswimming\n"
      "red\ngreen\nblue\nyellow\nwhite\nblack\norange\npurple\n"
      "left\nright\nup\ndown\nslow\nfast\nslowly\nquickly\n"
      "square\ncolor\nwhich\nway\ndoes\nit\nmove\nmoves\nhow\n"
      "a\nan\nin\non\nof\nto\nand\n"
      "do\ning\nner\ns\n"
      "ball\ntable\nchair\npark\nstreet\n"
      "one\ntwo\nthree\nfour\nfive\n"
      "?\n.\n,\n!\n";
  return text;
}

int TokenizedText::real_length() const {
  int n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  return n;
}

TokenizedText tokenize(const std::string& text, const Vocabulary& vocab, int max_len) {
  if (max_len < 2) fail("tokenize: max_len must fit [CLS] and [SEP]");
  // Lowercase + split: alphanumeric runs, single punctuation characters.
  std::vector<std::string> words;
  std::string cur;
  for (char raw : text) {
    const unsigned char u = static_cast<unsigned char>(raw);
    const char c = char(std::tolower(u));
    if (std::isspace(u)) {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
    } else if (std::isalnum(u)) {
      cur.push_back(c);
    } else {
      if (!cur.empty()) words.push_back(std::move(cur)), cur.clear();
      words.emplace_back(1, c);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));

  std::vector<int> pieces;
  for (const auto& word : words) {
    size_t at = 0;
    while (at < word.size()) {
      // Greedy longest match against the vocabulary.
      size_t best = 0;
      int best_id = -1;
      for (size_t len = std::min(word.size() - at, size_t(64)); len >= 1; --len) {
        const int id = vocab.id_of(word.substr(at, len));
        if (id >= 0 && !vocab.is_reserved(id)) {
          best = len;
          best_id = id;
          break;
        }
      }
      if (best_id < 0) {
        pieces.push_back(vocab.unk_id);
        at += 1;  // skip one character and keep scanning
      } else {
        pieces.push_back(best_id);
        at += best;
      }
    }
  }

  const int keep = std::min(int(pieces.size()), max_len - 2);
  TokenizedText tok;
  tok.ids.push_back(vocab.cls_id);
  tok.ids.insert(tok.ids.end(), pieces.begin(), pieces.begin() + keep);
  tok.ids.push_back(vocab.sep_id);
  tok.mask.assign(tok.ids.size(), true);
  return tok;
}

std::string detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (vocab.is_reserved(id)) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token_of(id);
  }
  return out;
}

TokenizedText pad_to(const TokenizedText& tok, int len, const Vocabulary& vocab) {
  if (int(tok.ids.size()) > len) fail("pad_to shorter than sequence");
  TokenizedText out = tok;
  while (int(out.ids.size()) < len) {
    out.ids.push_back(vocab.pad_id);
    out.mask.push_back(false);
  }
  return out;
}

TextEncoder::TextEncoder(ParameterTree& tree, const std::string& prefix,
                         const TextEncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  token_embed_ = tree.create(prefix + ".embed.token", init_normal(rng, cfg.vocab_size, cfg.dim));
  pos_embed_ = tree.create(prefix + ".embed.position", init_normal(rng, cfg.max_len, cfg.dim));
  blocks_.reserve(size_t(cfg.depth));
  for (int b = 0; b < cfg.depth; ++b) {
    const std::string bp = prefix + ".block" + std::to_string(b);
    Block blk;
    blk.ln_attn = LayerNorm(tree, bp + ".ln_attn", cfg.dim);
    blk.attn = AttentionBlock(tree, bp + ".attn", cfg.dim, cfg.dim, cfg.heads, rng);
    blk.ln_ffn = LayerNorm(tree, bp + ".ln_ffn", cfg.dim);
    blk.ffn = FeedForward(tree, bp + ".ffn", cfg.dim, cfg.dim * 4, rng);
    blocks_.push_back(std::move(blk));
  }
  final_ln_ = LayerNorm(tree, prefix + ".final_ln", cfg.dim);
}

Var TextEncoder::encode(const TokenizedText& tok) const {
  const int len = int(tok.ids.size());
  if (len > cfg_.max_len) fail("text length exceeds position table");
  for (int id : tok.ids)
    if (id < 0 || id >= cfg_.vocab_size) fail("vocabulary overflow: id " + std::to_string(id));
  std::vector<int> pos(static_cast<size_t>(len));
  for (int i = 0; i < len; ++i) pos[size_t(i)] = i;
  Var h = add(gather_rows(token_embed_, std::vector<int>(tok.ids.begin(), tok.ids.end())),
              gather_rows(pos_embed_, pos));
  const Tensor mask = key_padding_mask(len, tok.mask);
  for (const auto& blk : blocks_) {
    Var normed = blk.ln_attn.apply(h);
    h = add(h, blk.attn.apply(normed, normed, mask));
    h = add(h, blk.ffn.apply(blk.ln_ffn.apply(h)));
  }
  return final_ln_.apply(h);
}

}  // namespace mcg
