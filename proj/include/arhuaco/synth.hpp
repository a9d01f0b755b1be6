#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "arhuaco/dataset.hpp"
#include "arhuaco/error.hpp"
#include "arhuaco/ingest.hpp"
#include "arhuaco/rng.hpp"

namespace arhuaco {

/// Desk-scale corpus generator. The grammars mimic the collected-trace style:
/// grid jobs touch /cvmfs software stacks, scratch space and storage
/// elements; malware opens sensitive paths, talks to IRC/C2 endpoints, runs
/// payloads from /tmp and scans ports. Pools are seeded with the trace
/// literals that appear in the collected-data examples (irc.qeast.net,
/// /etc/passwd, alice-disk-se.gridka.de, /cvmfs/alice.cern.ch/x86).
struct CorpusSpec {
  Source source = Source::syscall;
  std::size_t normal_lines = 0;
  std::size_t malicious_lines = 0;
  std::uint64_t seed = 1;

  /// Probability that a malicious line slot carries a motif instead of a
  /// benign-grammar line.
  double motif_rate = 0.5;
  /// Probability that a benign line is an ambiguous weak-motif line
  /// (credential lookups, refused connects, /tmp payloads also occur in
  /// healthy jobs).
  double benign_noise_rate = 0.012;

  std::size_t lines_per_record = 6;

  // Pool cardinalities (nuisance diversity).
  std::size_t scratch_job_pool = 400;
  std::size_t internal_ip_pool = 60;
  std::size_t external_ip_pool = 24;
};

inline CorpusSpec syscall_corpus_spec(std::size_t normal_lines, std::size_t malicious_lines,
                                      std::uint64_t seed) {
  CorpusSpec s;
  s.source = Source::syscall;
  s.normal_lines = normal_lines;
  s.malicious_lines = malicious_lines;
  s.seed = seed;
  s.motif_rate = 0.5;
  s.benign_noise_rate = 0.025;
  s.lines_per_record = 6;
  return s;
}

inline CorpusSpec network_corpus_spec(std::size_t normal_lines, std::size_t malicious_lines,
                                      std::uint64_t seed) {
  CorpusSpec s;
  s.source = Source::network;
  s.normal_lines = normal_lines;
  s.malicious_lines = malicious_lines;
  s.seed = seed;
  s.motif_rate = 0.9;
  s.benign_noise_rate = 0.01;
  s.lines_per_record = 1;
  return s;
}

namespace detail {

inline const std::vector<std::string>& grid_software_paths() {
  static const std::vector<std::string> v{
      "/cvmfs/alice.cern.ch/x86_64-2.6-gnu-4.1.2/Packages/AliRoot/v5-09-59/lib/libSTEER.so",
      "/cvmfs/alice.cern.ch/x86_64-2.6-gnu-4.1.2/Packages/ROOT/v6-20-08/lib/libCore.so",
      "/cvmfs/alice.cern.ch/bin/aliroot",
      "/cvmfs/alice.cern.ch/etc/grid-env.sh",
      "/usr/lib64/libc.so.6",
      "/usr/lib64/libssl.so.1.0",
      "/usr/lib64/libxml2.so.2",
      "/etc/hosts",
      "/etc/resolv.conf",
      "/etc/ld.so.cache",
      "/proc/self/status",
      "/proc/self/maps",
      "/var/lib/condor/execute/dir.1",
  };
  return v;
}

inline const std::vector<std::string>& missing_paths() {
  static const std::vector<std::string> v{
      "/cvmfs/alice.cern.ch/x86",  // collected-data example
      "/usr/local/lib/libcrypto.so",
      "/opt/alien/etc/alien.conf",
      "/cvmfs/alice.cern.ch/x86_64-2.6-gnu-4.1.2/Packages/GEANT3/missing",
  };
  return v;
}

inline const std::vector<std::string>& sensitive_paths() {
  static const std::vector<std::string> v{
      "/etc/passwd",  // collected-data example
      "/etc/shadow",
      "/root/.ssh/id_rsa",
      "/root/.ssh/authorized_keys",
      "/etc/ssh/sshd_config",
      "/etc/sudoers",
      "/home/alice/.globus/userkey.pem",
      "/home/alice/.globus/usercert.pem",
      "/var/run/secrets/grid-proxy",
      "/etc/krb5.keytab",
  };
  return v;
}

inline const std::vector<std::string>& grid_tools() {
  static const std::vector<std::string> v{"aliroot", "root.exe", "python2.7", "sh",
                                          "perl",    "xrdcp",    "gcc",       "env"};
  return v;
}

inline const std::vector<std::string>& benign_ports() {
  static const std::vector<std::string> v{"1094", "8443", "443", "9000", "2811", "1093", "20048"};
  return v;
}

inline const std::vector<std::string>& c2_ports() {
  static const std::vector<std::string> v{"6667", "6668", "6669", "4444", "31337", "1337", "9001",
                                          "8081"};
  return v;
}

inline const std::vector<std::string>& irc_hosts() {
  static const std::vector<std::string> v{
      "irc.qeast.net",  // collected-data example
      "irc.efnet.org",      "irc.undernet.org",  "irc.dal.net",       "irc.quakenet.org",
      "irc.rizon.net",      "irc.freenode.net",  "irc.ircnet.com",    "irc.gamesurge.net",
      "irc.synirc.net",     "irc.oftc.net",      "irc.esper.net",     "irc.abjects.net",
      "irc.criten.net",     "irc.europnet.org",  "irc.link-net.org",  "irc.scenep2p.net",
      "irc.swiftirc.net",   "irc.wenet.ru",      "irc.byroe.net",     "irc.axenet.org",
      "irc.chatjunkies.org", "irc.darkmyst.org", "irc.epiknet.org",   "irc.euirc.net",
      "irc.evolu.net",      "irc.fdfnet.net",    "irc.forestnet.org", "irc.galaxynet.org",
      "irc.hackint.org",    "irc.icq-chat.com",  "irc.kampungchat.org", "irc.librairc.net",
      "irc.mibbit.net",     "irc.mindforge.org", "irc.nordicirc.net", "irc.p2p-network.net",
      "irc.pirc.pl",        "irc.recycled-irc.net", "irc.skychatz.org", "irc.spotchat.org",
      "irc.technet.chat",   "irc.tilde.chat",    "irc.uworld.se",     "irc.xertion.org",
  };
  return v;
}

inline const std::vector<std::string>& grid_hosts() {
  static const std::vector<std::string> v{
      "alice-disk-se.gridka.de",  // collected-data example
      "eos.cern.ch",
      "alien.cern.ch",
      "cvmfs-stratum-one.cern.ch",
      "xrootd.pic.es",
      "se01.ihep.ac.cn",
      "storage.sara.nl",
      "alimonitor.cern.ch",
      "voms.cern.ch",
      "dcache.gsi.de",
      "golias.farm.particle.cz",
      "ccsrm.in2p3.fr",
  };
  return v;
}

class LineGrammar {
 public:
  LineGrammar(const CorpusSpec& spec, Rng& rng) : spec_(spec), rng_(rng) {}

  /// One benign syscall line. Healthy jobs also produce clustered activity
  /// (allocation runs, storage retry storms) and the occasional weak motif
  /// (credential lookups, /tmp setup scripts, failed DNS), so those token
  /// patterns carry no label by themselves.
  std::string benign_syscall_line() {
    if (!queue_.empty()) {
      auto line = queue_.front();
      queue_.erase(queue_.begin());
      return line;
    }
    if (rng_.uniform() < spec_.benign_noise_rate) return benign_noise_syscall_line();
    const double r = rng_.uniform();
    if (r < 0.20) return "file open fd " + fd() + " name " + benign_path();
    if (r < 0.30) return "file access res 2 ENOENT name " + pick(missing_paths());
    if (r < 0.50) return "file read fd " + fd() + " size " + size();
    if (r < 0.62) return "file write fd " + fd() + " size " + size();
    if (r < 0.74) return "file close fd " + fd() + " res 0";
    if (r < 0.82) return "net connect fd " + fd() + " port " + pick(benign_ports()) + " ok";
    if (r < 0.86) return "net dns query " + pick(grid_hosts()) + " res 0";
    if (r < 0.92) return "proc exec name " + pick(grid_tools()) + " uid " + uid();
    if (r < 0.95) return "proc clone pid " + pid() + " res 0";
    if (r < 0.97) return "mem brk addr 0x" + hex() + " res 0";
    if (r < 0.99) {
      // allocation run: consecutive unique break addresses
      const std::size_t extra = 1 + rng_.below(3);
      for (std::size_t i = 0; i < extra; ++i)
        queue_.push_back("mem brk addr 0x" + hex() + " res 0");
      return "mem brk addr 0x" + hex() + " res 0";
    }
    // retry storm against one storage port
    const std::string f = fd();
    const std::string port = pick(benign_ports());
    const std::size_t extra = 1 + rng_.below(2);
    for (std::size_t i = 0; i < extra; ++i)
      queue_.push_back("net connect fd " + f + " port " + port + " refused");
    return "net connect fd " + f + " port " + port + " refused";
  }

  std::string benign_noise_syscall_line() {
    const double r = rng_.uniform();
    if (r < 0.50) return "file open fd " + fd() + " name /etc/passwd";
    if (r < 0.80) return "proc exec name /tmp/setup" + std::to_string(rng_.below(40)) + ".sh uid " + uid();
    return "net dns query " + pick(grid_hosts()) + " res 3";
  }

  // Malicious windows are behavior-coherent: one motif family per window,
  // with the family's lines dripped into the motif slots.
  enum class MotifFamily {
    credential_pair,   // /etc/passwd open + read on the same descriptor
    sensitive_open,    // keys, shadow, sudoers
    tmp_payload,       // executing a dropped payload
    c2_connect,        // known-bad ports
    irc_dns,
    dga_dns,
    port_scan,         // ascending refused connects
  };

  MotifFamily pick_family() {
    const double r = rng_.uniform();
    if (r < 0.25) return MotifFamily::credential_pair;
    if (r < 0.35) return MotifFamily::sensitive_open;
    if (r < 0.50) return MotifFamily::tmp_payload;
    if (r < 0.62) return MotifFamily::c2_connect;
    if (r < 0.70) return MotifFamily::irc_dns;
    if (r < 0.78) return MotifFamily::dga_dns;
    return MotifFamily::port_scan;
  }

  struct MotifState {
    MotifFamily family = MotifFamily::credential_pair;
    bool unit_emitted = false;
    int scan_port = 0;
    std::string scan_fd;
  };

  MotifState start_motif() {
    MotifState st;
    st.family = pick_family();
    st.scan_port = 1 + static_cast<int>(rng_.below(60000));
    st.scan_fd = fd();
    return st;
  }

  /// Lines for one motif slot; empty when the family is single-shot and
  /// already emitted (the slot falls back to benign activity).
  std::vector<std::string> motif_lines(MotifState& st) {
    switch (st.family) {
      case MotifFamily::credential_pair: {
        if (st.unit_emitted) return {};
        st.unit_emitted = true;
        const std::string f = fd();
        return {"file open fd " + f + " name /etc/passwd",
                "file read fd " + f + " size " + size()};
      }
      case MotifFamily::sensitive_open: {
        if (st.unit_emitted) return {};
        st.unit_emitted = true;
        // skip /etc/passwd here: the credential pair owns the shared literal
        const auto& pool = sensitive_paths();
        return {"file open fd " + fd() + " name " + pool[1 + rng_.below(pool.size() - 1)]};
      }
      case MotifFamily::tmp_payload:
        if (st.unit_emitted) return {};
        st.unit_emitted = true;
        return {"proc exec name /tmp/" + rand_name() + " uid " + uid()};
      case MotifFamily::c2_connect:
        return {"net connect fd " + fd() + " port " + pick(c2_ports()) + " ok"};
      case MotifFamily::irc_dns:
        return {"net dns query " + pick(irc_hosts()) + " res 0"};
      case MotifFamily::dga_dns:
        return {"net dns query " + dga_host() + " res 3"};
      case MotifFamily::port_scan:
        return {"net connect fd " + st.scan_fd + " port " + std::to_string(st.scan_port++) +
                " refused"};
    }
    return {};
  }

  std::string benign_network_line() {
    if (rng_.uniform() < spec_.benign_noise_rate)
      return internal_ip() + " " + external_ip() + " " + one_off_host() + " " + count() +
             " C_INTERNET";
    return internal_ip() + " " + external_ip() + " " + pick(grid_hosts()) + " " + count() +
           " C_INTERNET";
  }

  std::string malicious_network_line() {
    const double r = rng_.uniform();
    if (r < 0.35)
      return internal_ip() + " " + external_ip() + " " + pick(irc_hosts()) + " " + count() +
             " C_INTERNET";
    if (r < 0.65)
      return internal_ip() + " " + external_ip() + " " + dga_host() + " " + count() +
             " C_INTERNET";
    if (r < 0.85)  // inbound: direction reversed, token multiset matches benign
      return external_ip() + " " + internal_ip() + " " + pick(grid_hosts()) + " " + count() +
             " C_INTERNET";
    // lateral movement between worker nodes
    return internal_ip() + " " + internal_ip() + " " + pick(grid_hosts()) + " " + count() +
           " C_INTERNET";
  }

  std::string benign_path() {
    const double r = rng_.uniform();
    if (r < 0.45) return pick(grid_software_paths());
    if (r < 0.75) {
      const auto job = rng_.below(spec_.scratch_job_pool);
      const char* leaf[] = {"out.root", "log.txt", "data.bin", "stdout", "wn.xml"};
      return "/scratch/job" + std::to_string(job) + "/" + leaf[rng_.below(5)];
    }
    if (r < 0.90) return "/tmp/alien_token_" + std::to_string(rng_.below(200));
    return "/scratch/job" + std::to_string(rng_.below(spec_.scratch_job_pool)) + "/AliESDs.root";
  }

  std::string dga_host() {
    static const char* tlds[] = {".ru", ".biz", ".info", ".top", ".cn"};
    static const char consonants[] = "bcdfghjklmnpqrstvwxz";
    static const char vowels[] = "aeiouy";
    std::string h;
    const std::size_t len = 7 + rng_.below(6);
    for (std::size_t i = 0; i < len; ++i)
      h += (i % 2 == 0) ? consonants[rng_.below(sizeof(consonants) - 1)]
                        : vowels[rng_.below(sizeof(vowels) - 1)];
    return h + tlds[rng_.below(5)];
  }

  std::string one_off_host() {
    // Benign long-tail: mirrors and CDN nodes resolved once.
    return "mirror-" + std::to_string(rng_.below(100000)) + ".cdn77.org";
  }

  std::string internal_ip() { return "IP.i" + std::to_string(rng_.below(spec_.internal_ip_pool)); }
  std::string external_ip() { return "IP.e" + std::to_string(rng_.below(spec_.external_ip_pool)); }

 private:
  std::string fd() { return std::to_string(3 + rng_.below(60)); }
  std::string uid() { return std::to_string(1000 + rng_.below(8)); }
  std::string pid() { return std::to_string(2000 + rng_.below(28000)); }
  std::string size() {
    static const char* sizes[] = {"512", "1024", "4096", "8192", "16384", "65536"};
    return sizes[rng_.below(6)];
  }
  std::string count() { return std::to_string(1 + rng_.below(3)); }
  std::string hex() {
    static const char digits[] = "0123456789abcdef";
    std::string h;
    for (int i = 0; i < 8; ++i) h += digits[rng_.below(16)];
    return h;
  }
  std::string rand_name() {
    static const char chars[] = "abcdefghijklmnopqrstuvwxyz0123456789";
    std::string s;
    for (int i = 0; i < 8; ++i) s += chars[rng_.below(36)];
    return s;
  }

  const std::string& pick(const std::vector<std::string>& pool) {
    return pool[rng_.below(pool.size())];
  }

  const CorpusSpec& spec_;
  Rng& rng_;
  std::vector<std::string> queue_;  // pending lines of a benign cluster
};

}  // namespace detail

/// Benign-grammar corpus; every line parses and carries the normal label.
inline LabeledDataset synth_benign_corpus(const CorpusSpec& spec) {
  if (spec.normal_lines < 1) raise(Errc::config_error, "normal_lines must be >= 1");
  Rng rng(spec.seed);
  detail::LineGrammar grammar(spec, rng);
  LabeledDataset data;
  LabeledLines rec;
  rec.source = spec.source;
  rec.label = Label::normal;
  for (std::size_t i = 0; i < spec.normal_lines; ++i) {
    rec.lines.push_back(spec.source == Source::syscall ? grammar.benign_syscall_line()
                                                       : grammar.benign_network_line());
    if (rec.lines.size() == spec.lines_per_record) {
      data.push_back(rec);
      rec.lines.clear();
    }
  }
  if (!rec.lines.empty()) data.push_back(rec);
  return data;
}

/// Benign grammar plus malicious motifs. Each syscall window commits to one
/// motif family; motif slots fire at the configured per-line rate. Network
/// windows are single lines, motif-bearing at the same rate.
inline LabeledDataset synth_malicious_corpus(const CorpusSpec& spec) {
  if (spec.malicious_lines < 1) raise(Errc::config_error, "malicious_lines must be >= 1");
  Rng rng(spec.seed + 0x51f0a11ce5ULL);
  detail::LineGrammar grammar(spec, rng);
  LabeledDataset data;

  std::size_t remaining = spec.malicious_lines;
  while (remaining > 0) {
    LabeledLines rec;
    rec.source = spec.source;
    rec.label = Label::malicious;
    const std::size_t want = std::min(spec.lines_per_record, remaining);
    if (spec.source == Source::network) {
      for (std::size_t i = 0; i < want; ++i)
        rec.lines.push_back(rng.uniform() < spec.motif_rate ? grammar.malicious_network_line()
                                                            : grammar.benign_network_line());
    } else {
      auto motif = grammar.start_motif();
      std::vector<std::string> pending;
      for (std::size_t i = 0; i < want; ++i) {
        if (pending.empty() && rng.uniform() < spec.motif_rate) pending = grammar.motif_lines(motif);
        if (!pending.empty()) {
          rec.lines.push_back(pending.front());
          pending.erase(pending.begin());
        } else {
          rec.lines.push_back(grammar.benign_syscall_line());
        }
      }
    }
    remaining -= want;
    data.push_back(std::move(rec));
  }
  return data;
}

/// Both classes, benign block first; downstream splits shuffle.
inline LabeledDataset synth_corpus(const CorpusSpec& spec) {
  auto data = synth_benign_corpus(spec);
  auto mal = synth_malicious_corpus(spec);
  data.insert(data.end(), std::make_move_iterator(mal.begin()), std::make_move_iterator(mal.end()));
  return data;
}

struct SplitResult {
  LabeledDataset train;
  LabeledDataset val;
  LabeledDataset test;
};

/// Disjoint, exhaustive, label-stratified split. The remainder after the
/// training fraction divides evenly between validation and test.
inline SplitResult split_dataset(const LabeledDataset& data, double train_fraction,
                                 std::uint64_t seed) {
  if (train_fraction <= 0.0 || train_fraction >= 1.0)
    raise(Errc::config_error, "train_fraction must be in (0,1)");
  if (data.size() < 3) raise(Errc::too_small_for_split, "need at least 3 records");
  Rng rng(seed);
  SplitResult out;
  for (Label label : {Label::normal, Label::malicious}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (data[i].label == label) idx.push_back(i);
    if (idx.empty()) continue;
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    const std::size_t n_train =
        static_cast<std::size_t>(static_cast<double>(n) * train_fraction + 0.5);
    // Half-to-even on the validation share keeps per-class rounding drift
    // from accumulating across classes.
    const std::size_t n_val = static_cast<std::size_t>(
        std::nearbyint(static_cast<double>(n - n_train) / 2.0));
    for (std::size_t i = 0; i < n; ++i) {
      const auto& rec = data[idx[i]];
      if (i < n_train)
        out.train.push_back(rec);
      else if (i < n_train + n_val)
        out.val.push_back(rec);
      else
        out.test.push_back(rec);
    }
  }
  if (out.train.empty() || out.test.empty())
    raise(Errc::too_small_for_split, "split leaves an empty part");
  return out;
}

/// Stratified truncation to at most `max_records`, preserving class ratio.
inline LabeledDataset truncate_stratified(const LabeledDataset& data, std::size_t max_records,
                                          std::uint64_t seed) {
  if (data.size() <= max_records) return data;
  std::vector<std::size_t> normal, malicious;
  for (std::size_t i = 0; i < data.size(); ++i)
    (data[i].label == Label::malicious ? malicious : normal).push_back(i);
  Rng rng(seed);
  rng.shuffle(normal);
  rng.shuffle(malicious);
  const double keep = static_cast<double>(max_records) / static_cast<double>(data.size());
  std::size_t n_norm = static_cast<std::size_t>(static_cast<double>(normal.size()) * keep + 0.5);
  n_norm = std::min(n_norm, normal.size());
  std::size_t n_mal = max_records - n_norm;
  n_mal = std::min(n_mal, malicious.size());
  std::vector<std::size_t> chosen(normal.begin(), normal.begin() + n_norm);
  chosen.insert(chosen.end(), malicious.begin(), malicious.begin() + n_mal);
  std::sort(chosen.begin(), chosen.end());
  LabeledDataset out;
  out.reserve(chosen.size());
  for (auto i : chosen) out.push_back(data[i]);
  return out;
}

}  // namespace arhuaco
