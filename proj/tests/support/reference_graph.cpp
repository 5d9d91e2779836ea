#include "reference_graph.hpp"

#include <openssl/ripemd.h>

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>

#include "forge/realfmt.hpp"
#include "sha256_oracle.hpp"

namespace reference {

namespace {

using Script = std::vector<std::uint8_t>;
using Txid = std::array<std::uint8_t, 32>;

void varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  auto le = [&](std::uint64_t x, int n) {
    for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(x >> (8 * i)));
  };
  if (v < 0xfd) {
    out.push_back(static_cast<std::uint8_t>(v));
  } else if (v <= 0xffff) {
    out.push_back(0xfd);
    le(v, 2);
  } else if (v <= 0xffffffff) {
    out.push_back(0xfe);
    le(v, 4);
  } else {
    out.push_back(0xff);
    le(v, 8);
  }
}

void le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

struct Txo {
  Txid txid;
  std::uint32_t vout;
  std::uint64_t value;
  Script script;
  bool spent = false;
};

struct Tx {
  std::uint64_t height = 0;
  bool coinbase = false;
  bool excluded = false;
  std::vector<std::pair<std::uint64_t, Script>> ins;
  std::vector<std::pair<std::uint64_t, Script>> outs;
};

std::optional<Script> first_push_after_return(const Script& s) {
  if (s.empty() || s[0] != 0x6a) return std::nullopt;
  if (s.size() < 2) return Script{};
  std::size_t len = s[1], pos = 2;
  if (len == 0x4c) {
    if (s.size() < 3) return Script{};
    len = s[2];
    pos = 3;
  } else if (len > 75) {
    return Script{};
  }
  if (pos + len > s.size()) return Script{};
  return Script(s.begin() + pos, s.begin() + pos + len);
}

bool coinjoin(const Tx& t) {
  std::vector<Script> distinct;
  for (const auto& [v, s] : t.ins) {
    if (std::find(distinct.begin(), distinct.end(), s) == distinct.end()) distinct.push_back(s);
  }
  if (distinct.size() < 3) return false;
  for (std::size_t i = 0; i < t.outs.size(); ++i) {
    if (t.outs[i].first < 10000) continue;
    int same = 0;
    for (const auto& o : t.outs) same += o.first == t.outs[i].first;
    if (same >= 3) return true;
  }
  return false;
}

bool colored(const forge::RawTransaction& tx) {
  for (const auto& o : tx.outputs) {
    auto p = first_push_after_return(o.lock_script);
    if (!p || p->size() < 4) continue;
    if ((*p)[0] == 0x4f && (*p)[1] == 0x41 && (*p)[2] == 0x01 && (*p)[3] == 0x00) return true;
    if ((*p)[0] == 'o' && (*p)[1] == 'm' && (*p)[2] == 'n' && (*p)[3] == 'i') return true;
  }
  const auto tag = tx.inputs.at(0).sequence % 64;
  return tag == 37 || tag == 51;
}

std::array<std::uint8_t, 20> h160(const Script& data) {
  auto inner = oracle::sha256(data);
  std::array<std::uint8_t, 20> out{};
#pragma GCC diagnostic push
#pragma GCC diagnostic ignored "-Wdeprecated-declarations"
  RIPEMD160(inner.data(), inner.size(), out.data());
#pragma GCC diagnostic pop
  return out;
}

Script p2pkh(const std::uint8_t* h) {
  Script s{0x76, 0xa9, 0x14};
  s.insert(s.end(), h, h + 20);
  s.push_back(0x88);
  s.push_back(0xac);
  return s;
}

Script p2sh(const std::uint8_t* h) {
  Script s{0xa9, 0x14};
  s.insert(s.end(), h, h + 20);
  s.push_back(0x87);
  return s;
}

std::vector<Script> pubkey_scripts(const Script& key) {
  Script pk{static_cast<std::uint8_t>(key.size())};
  pk.insert(pk.end(), key.begin(), key.end());
  pk.push_back(0xac);
  return {pk, p2pkh(h160(key).data())};
}

int hexval(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::uint32_t polymod(const std::vector<int>& v) {
  const std::uint32_t gen[5] = {0x3b6a57b2, 0x26508e6d, 0x1ea119fa, 0x3d4233dd, 0x2a1462b3};
  std::uint32_t chk = 1;
  for (int x : v) {
    auto top = chk >> 25;
    chk = ((chk & 0x1ffffff) << 5) ^ static_cast<std::uint32_t>(x);
    for (int i = 0; i < 5; ++i) {
      if ((top >> i) & 1) chk ^= gen[i];
    }
  }
  return chk;
}

std::vector<Script> decode(const std::string& addr) {
  if ((addr.size() == 66 || addr.size() == 130) &&
      std::all_of(addr.begin(), addr.end(), [](char c) { return hexval(c) >= 0; })) {
    Script key;
    for (std::size_t i = 0; i < addr.size(); i += 2) key.push_back(static_cast<std::uint8_t>(hexval(addr[i]) * 16 + hexval(addr[i + 1])));
    if ((key.size() == 33 && (key[0] == 2 || key[0] == 3)) || (key.size() == 65 && key[0] == 4)) return pubkey_scripts(key);
    return {};
  }

  const std::string charset = "qpzry9x8gf2tvdw0s3jn54khce6mua7l";
  std::string lower = addr;
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto sep = lower.rfind('1');
  if (sep != std::string::npos && sep > 0) {
    auto hrp = lower.substr(0, sep);
    if (hrp == "bc" || hrp == "tb" || hrp == "bcrt") {
      std::vector<int> data;
      bool ok = true;
      for (auto c : lower.substr(sep + 1)) {
        auto p = charset.find(c);
        if (p == std::string::npos) ok = false;
        data.push_back(static_cast<int>(p));
      }
      if (ok && data.size() >= 7) {
        std::vector<int> v;
        for (char c : hrp) v.push_back(c >> 5);
        v.push_back(0);
        for (char c : hrp) v.push_back(c & 31);
        v.insert(v.end(), data.begin(), data.end());
        if (polymod(v) == 1 && data[0] == 0) {
          Script prog;
          int acc = 0, bits = 0;
          for (std::size_t i = 1; i + 6 < data.size(); ++i) {
            acc = (acc << 5) | data[i];
            bits += 5;
            if (bits >= 8) {
              bits -= 8;
              prog.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xff));
            }
          }
          if (prog.size() == 20 || prog.size() == 32) {
            Script s{0x00, static_cast<std::uint8_t>(prog.size())};
            s.insert(s.end(), prog.begin(), prog.end());
            return {s};
          }
        }
      }
    }
  }

  const std::string alphabet = "123456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnopqrstuvwxyz";
  std::vector<std::uint8_t> num;  // big-endian
  for (char c : addr) {
    auto d = alphabet.find(c);
    if (d == std::string::npos) return {};
    int carry = static_cast<int>(d);
    for (auto it = num.rbegin(); it != num.rend(); ++it) {
      carry += *it * 58;
      *it = static_cast<std::uint8_t>(carry & 0xff);
      carry >>= 8;
    }
    while (carry) {
      num.insert(num.begin(), static_cast<std::uint8_t>(carry & 0xff));
      carry >>= 8;
    }
  }
  std::size_t zeros = 0;
  while (zeros < addr.size() && addr[zeros] == '1') ++zeros;
  num.insert(num.begin(), zeros, 0);
  if (num.size() != 25) return {};
  auto check = oracle::sha256d(std::span<const std::uint8_t>(num.data(), 21));
  if (!std::equal(check.begin(), check.begin() + 4, num.begin() + 21)) return {};
  if (num[0] == 0x00 || num[0] == 0x6f) return {p2pkh(&num[1])};
  if (num[0] == 0x05 || num[0] == 0xc4) return {p2sh(&num[1])};
  return {};
}

// Scripts a coinbase output's address would resolve back to.
std::vector<Script> coinbase_scripts(const Script& s) {
  const auto n = s.size();
  if ((n == 35 && s[0] == 33 && s[34] == 0xac) || (n == 67 && s[0] == 65 && s[66] == 0xac)) {
    return pubkey_scripts(Script(s.begin() + 1, s.end() - 1));
  }
  bool standard = (n == 25 && s[0] == 0x76 && s[1] == 0xa9 && s[2] == 20 && s[23] == 0x88 && s[24] == 0xac) ||
                  (n == 23 && s[0] == 0xa9 && s[1] == 20 && s[22] == 0x87) ||
                  (n == 22 && s[0] == 0 && s[1] == 20) || (n == 34 && s[0] == 0 && s[1] == 32);
  if (standard) return {s};
  return {};
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::string real(double v) { return forge::format_real(v); }

struct Event {
  std::uint64_t s, r;
  double v;
  std::uint64_t block;
};

}  // namespace

std::vector<std::uint8_t> legacy_bytes(const forge::RawTransaction& tx) {
  std::vector<std::uint8_t> b;
  le32(b, static_cast<std::uint32_t>(tx.version));
  varint(b, tx.inputs.size());
  for (const auto& in : tx.inputs) {
    b.insert(b.end(), in.prevout.txid.begin(), in.prevout.txid.end());
    le32(b, in.prevout.vout);
    varint(b, in.unlock_script.size());
    b.insert(b.end(), in.unlock_script.begin(), in.unlock_script.end());
    le32(b, in.sequence);
  }
  varint(b, tx.outputs.size());
  for (const auto& o : tx.outputs) {
    for (int i = 0; i < 8; ++i) b.push_back(static_cast<std::uint8_t>(o.value >> (8 * i)));
    varint(b, o.lock_script.size());
    b.insert(b.end(), o.lock_script.begin(), o.lock_script.end());
  }
  le32(b, tx.locktime);
  return b;
}

Output build(const Input& in) {
  Output result;
  std::vector<Txo> txos;
  std::vector<Script> scripts;
  std::vector<Tx> txs;

  auto index_of = [&](const Script& s) -> long {
    for (std::size_t i = 0; i < scripts.size(); ++i) {
      if (scripts[i] == s) return static_cast<long>(i);
    }
    return -1;
  };

  for (std::size_t h = 0; h < in.blocks.size(); ++h) {
    for (const auto& raw : in.blocks[h].transactions) {
      Tx t;
      t.height = h;
      const auto txid = oracle::sha256d(legacy_bytes(raw));
      const auto& first = raw.inputs.at(0).prevout;
      t.coinbase = raw.inputs.size() == 1 && first.vout == 0xffffffff &&
                   std::all_of(first.txid.begin(), first.txid.end(), [](auto b) { return b == 0; });
      if (!t.coinbase) {
        for (const auto& input : raw.inputs) {
          auto it = std::find_if(txos.begin(), txos.end(), [&](const Txo& o) {
            return !o.spent && o.vout == input.prevout.vout && o.txid == input.prevout.txid;
          });
          if (it == txos.end()) throw std::runtime_error("reference: unresolved input");
          it->spent = true;
          t.ins.emplace_back(it->value, it->script);
        }
      }
      for (std::uint32_t i = 0; i < raw.outputs.size(); ++i) {
        const auto& o = raw.outputs[i];
        if (o.lock_script.empty() || o.lock_script[0] != 0x6a) txos.push_back({txid, i, o.value, o.lock_script});
        t.outs.emplace_back(o.value, o.lock_script);
        if (o.value > 0 && index_of(o.lock_script) < 0) scripts.push_back(o.lock_script);
      }
      if (!t.coinbase && (coinjoin(t) || colored(raw))) {
        t.excluded = true;
        result.excluded_txids.push_back(txid);
      }
      txs.push_back(std::move(t));
    }
  }

  // Transitive closure by repeated min-label relaxation.
  std::vector<std::size_t> label(scripts.size());
  for (std::size_t i = 0; i < label.size(); ++i) label[i] = i;
  std::vector<std::vector<std::size_t>> groups;
  for (const auto& t : txs) {
    if (t.coinbase || t.excluded) continue;
    std::vector<std::size_t> g;
    for (const auto& [v, s] : t.ins) {
      if (v > 0) g.push_back(static_cast<std::size_t>(index_of(s)));
    }
    if (g.size() > 1) groups.push_back(g);
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& g : groups) {
      std::size_t m = label[g[0]];
      for (auto x : g) m = std::min(m, label[x]);
      for (auto x : g) {
        if (label[x] != m) {
          label[x] = m;
          changed = true;
        }
      }
    }
    for (std::size_t i = 0; i < label.size(); ++i) {
      if (label[label[i]] != label[i]) {
        label[i] = label[label[i]];
        changed = true;
      }
    }
  }
  std::vector<std::size_t> roots(label.begin(), label.end());
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  std::vector<std::uint64_t> alias(scripts.size());
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    alias[i] = static_cast<std::uint64_t>(std::lower_bound(roots.begin(), roots.end(), label[i]) - roots.begin());
  }
  const std::size_t n = roots.size();
  result.scripts = scripts.size();
  result.clusters = n;

  std::vector<Event> events;
  std::set<std::pair<std::size_t, std::size_t>> intra;
  for (const auto& t : txs) {
    if (t.coinbase || t.excluded) continue;
    std::map<std::uint64_t, std::pair<std::uint64_t, std::uint64_t>> flow;
    std::map<std::size_t, std::pair<std::uint64_t, std::uint64_t>> script_flow;
    bool any_input = false;
    for (const auto& [v, s] : t.ins) {
      if (v == 0) continue;
      any_input = true;
      auto si = static_cast<std::size_t>(index_of(s));
      flow[alias[si]].first += v;
      script_flow[si].first += v;
    }
    if (!any_input) continue;
    for (const auto& [v, s] : t.outs) {
      if (v == 0) continue;
      auto si = static_cast<std::size_t>(index_of(s));
      flow[alias[si]].second += v;
      script_flow[si].second += v;
    }
    auto emit = [](const auto& f, auto&& sink) {
      std::uint64_t denom = 0;
      for (const auto& [k, io] : f) {
        if (io.second < io.first) denom += io.first;
      }
      if (denom == 0) return;
      for (const auto& [s, sio] : f) {
        if (sio.second >= sio.first) continue;
        for (const auto& [r, rio] : f) {
          if (rio.second <= rio.first) continue;
          const double net = static_cast<double>(rio.second - rio.first);
          sink(s, r, static_cast<double>(sio.first) * net / static_cast<double>(denom));
        }
      }
    };
    emit(flow, [&](std::uint64_t s, std::uint64_t r, double v) { events.push_back({s, r, v, t.height}); });
    emit(script_flow, [&](std::size_t s, std::size_t r, double) {
      if (alias[s] == alias[r]) intra.insert({s, r});
    });
  }
  result.events = events.size();

  struct Edge {
    std::uint64_t reveal, last, total;
    double mn, mx, sum;
  };
  std::map<std::pair<std::uint64_t, std::uint64_t>, Edge> edges;
  for (const auto& e : events) {
    auto key = std::make_pair(e.s, e.r);
    auto it = edges.find(key);
    if (it == edges.end()) {
      edges[key] = {e.block, e.block, 1, e.v, e.v, e.v};
      continue;
    }
    auto& x = it->second;
    x.reveal = std::min(x.reveal, e.block);
    x.last = std::max(x.last, e.block);
    ++x.total;
    x.mn = std::min(x.mn, e.v);
    x.mx = std::max(x.mx, e.v);
    x.sum += e.v;
  }

  std::map<std::uint64_t, std::set<std::string>> evidence;
  static const std::vector<std::string> categories = {"individual", "mining", "exchange", "marketplace",
                                                      "gambling",   "bet",    "faucet",   "mixer",
                                                      "ponzi",      "ransomware", "bridge"};
  auto credit = [&](const std::vector<Script>& ss, const std::string& cat) {
    for (const auto& s : ss) {
      auto i = index_of(s);
      if (i >= 0) evidence[alias[static_cast<std::size_t>(i)]].insert(cat);
    }
  };
  {
    std::istringstream lines(in.labels_csv);
    std::string line;
    std::getline(lines, line);
    while (std::getline(lines, line)) {
      auto f = split(line);
      if (f.size() < 3) continue;
      if (std::find(categories.begin(), categories.end(), f[1]) == categories.end()) continue;
      credit(decode(f[0]), f[1]);
    }
  }
  {
    std::vector<std::string> patterns;
    std::istringstream lines(in.coinbase_patterns);
    std::string line;
    while (std::getline(lines, line)) {
      if (!line.empty()) patterns.push_back(split(line)[0]);
    }
    for (const auto& b : in.blocks) {
      const auto& cb = b.transactions.at(0);
      std::string msg(cb.inputs[0].unlock_script.begin(), cb.inputs[0].unlock_script.end());
      bool hit = std::any_of(patterns.begin(), patterns.end(), [&](const auto& p) { return msg.find(p) != std::string::npos; });
      if (!hit) continue;
      for (const auto& o : cb.outputs) {
        if (o.value > 0) credit(coinbase_scripts(o.lock_script), "mining");
      }
    }
  }

  std::ostringstream nodes;
  nodes << "alias,label,degree,degree_in,degree_out,total_transaction_in,total_transaction_out,"
           "first_transaction_in,last_transaction_in,first_transaction_out,last_transaction_out,"
           "min_sent,max_sent,total_sent,min_received,max_received,total_received,"
           "cluster_size,cluster_num_edges,cluster_num_cc,cluster_num_nodes_in_cc\n";
  for (std::uint64_t a = 0; a < n; ++a) {
    std::set<std::uint64_t> to, from;
    std::uint64_t cin = 0, cout = 0, fin = 0, lin = 0, fout = 0, lout = 0;
    double mins = 0, maxs = 0, tots = 0, minr = 0, maxr = 0, totr = 0;
    for (const auto& e : events) {
      if (e.s == a) {
        to.insert(e.r);
        if (cout == 0) {
          fout = lout = e.block;
          mins = maxs = e.v;
        }
        fout = std::min(fout, e.block);
        lout = std::max(lout, e.block);
        mins = std::min(mins, e.v);
        maxs = std::max(maxs, e.v);
        tots += e.v;
        ++cout;
      }
      if (e.r == a) {
        from.insert(e.s);
        if (cin == 0) {
          fin = lin = e.block;
          minr = maxr = e.v;
        }
        fin = std::min(fin, e.block);
        lin = std::max(lin, e.block);
        minr = std::min(minr, e.v);
        maxr = std::max(maxr, e.v);
        totr += e.v;
        ++cin;
      }
    }

    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < scripts.size(); ++i) {
      if (alias[i] == a) members.push_back(i);
    }
    std::set<std::size_t> touched;
    std::uint64_t num_edges = 0;
    for (const auto& [s, r] : intra) {
      if (alias[s] != a) continue;
      ++num_edges;
      touched.insert(s);
      touched.insert(r);
    }
    std::uint64_t cc = 0;
    std::set<std::size_t> visited;
    for (auto start : touched) {
      if (visited.count(start)) continue;
      ++cc;
      std::vector<std::size_t> stack{start};
      visited.insert(start);
      while (!stack.empty()) {
        auto x = stack.back();
        stack.pop_back();
        for (const auto& [s, r] : intra) {
          std::size_t y;
          if (s == x) {
            y = r;
          } else if (r == x) {
            y = s;
          } else {
            continue;
          }
          if (visited.insert(y).second) stack.push_back(y);
        }
      }
    }

    std::string lab;
    auto ev = evidence.find(a);
    if (ev != evidence.end() && ev->second.size() == 1) lab = *ev->second.begin();
    auto opt_int = [](bool present, std::uint64_t v) { return present ? std::to_string(v) : std::string{}; };
    auto opt_real = [](bool present, double v) { return present ? real(v) : std::string{}; };
    nodes << a << ',' << lab << ',' << (to.size() + from.size()) << ',' << from.size() << ',' << to.size() << ','
          << cin << ',' << cout << ',' << opt_int(cin, fin) << ',' << opt_int(cin, lin) << ',' << opt_int(cout, fout)
          << ',' << opt_int(cout, lout) << ',' << opt_real(cout, mins) << ',' << opt_real(cout, maxs) << ','
          << real(tots) << ',' << opt_real(cin, minr) << ',' << opt_real(cin, maxr) << ',' << real(totr) << ','
          << members.size() << ',' << num_edges << ',' << cc << ',' << touched.size() << '\n';
  }
  result.nodes_csv = nodes.str();

  std::ostringstream out;
  out << "a,b,reveal,last_seen,total,min_sent,max_sent,total_sent\n";
  for (const auto& [k, e] : edges) {
    out << k.first << ',' << k.second << ',' << e.reveal << ',' << e.last << ',' << e.total << ',' << real(e.mn)
        << ',' << real(e.mx) << ',' << real(e.sum) << '\n';
  }
  result.edges_csv = out.str();
  return result;
}

}  // namespace reference
