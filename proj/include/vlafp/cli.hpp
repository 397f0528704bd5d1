#pragma once

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "vlafp/vlafp.hpp"

namespace vlafp::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline double parse_theta(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "infinity") return kInf;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  require(used == s.size() && v >= 0.0, "invalid theta '" + s + "' (expected a number >= 0 or inf)");
  return v;
}

/// "lo:hi" -> (lo, hi)
inline std::pair<double, double> parse_range(const std::string& s) {
  const auto colon = s.find(':');
  require(colon != std::string::npos, "invalid range '" + s + "' (expected lo:hi)");
  try {
    return {std::stod(s.substr(0, colon)), std::stod(s.substr(colon + 1))};
  } catch (const std::exception&) {
    throw Error("invalid range '" + s + "' (expected lo:hi)");
  }
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw Error("invalid number '" + item + "' in list '" + s + "'");
    }
  }
  require(!out.empty(), "empty list");
  return out;
}

inline std::string format_theta(double theta) {
  if (std::isinf(theta)) return "inf";
  std::ostringstream os;
  os << theta;
  return os.str();
}

/// 64-bit FNV-1a, hex encoded.
inline std::string digest(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct Corpus {
  std::vector<fs::path> paths;
  std::vector<Waveform> audio;
};

/// A single audio file, or every audio file of a directory in sorted order.
inline Corpus load_corpus(const std::string& path) {
  Corpus c;
  if (!fs::exists(path)) throw Error("no such file: " + path);
  if (fs::is_directory(path)) c.paths = list_audio_files(path);
  else c.paths = {path};
  require(!c.paths.empty(), "no audio files in " + path);
  for (const auto& p : c.paths) c.audio.push_back(load_audio(p));
  return c;
}

struct SegmentFlags {
  std::string method = "main";
  std::string theta = "1";
  double tmin = 0.5;
  double tmax = 5.0;
  double pelt_penalty = 0.0;
  std::size_t pelt_jump = 1;
  double window = 1.0;
  double hop = 0.5;

  void add(CLI::App* app) {
    app->add_option("--method", method, "segmentation: main, nosilence, pelt, waveform, fixed");
    app->add_option("--theta", theta, "z-score threshold (number or inf)");
    app->add_option("--tmin", tmin, "minimum segment length, seconds");
    app->add_option("--tmax", tmax, "maximum segment length, seconds");
    app->add_option("--pelt-penalty", pelt_penalty, "PELT penalty (0 = 2 ln(n) var)");
    app->add_option("--pelt-jump", pelt_jump, "PELT change-point grid step, frames");
    app->add_option("--window", window, "fixed method window, seconds");
    app->add_option("--hop", hop, "fixed method hop, seconds");
  }

  SegmenterConfig resolve() const {
    SegmenterConfig c;
    c.method = parse_segment_method(method);
    c.theta = parse_theta(theta);
    c.t_min = tmin;
    c.t_max = tmax;
    if (pelt_penalty > 0.0) c.pelt_penalty = pelt_penalty;
    c.pelt_jump = pelt_jump;
    c.fixed_window = window;
    c.fixed_hop = hop;
    c.validate();
    return c;
  }
};

struct ModelFlags {
  ModelConfig cfg;

  void add(CLI::App* app) {
    app->add_option("--mels", cfg.f_bins, "mel bands (model input width)");
    app->add_option("--dim", cfg.d, "hidden and fingerprint dimension");
    app->add_option("--blocks", cfg.n_blocks, "number of blocks");
    app->add_option("--heads", cfg.n_heads, "attention heads");
    app->add_option("--head-dim", cfg.d_head, "per-head dimension");
    app->add_option("--alpha", cfg.ffn_alpha, "FFN width multiplier");
  }

  ModelConfig resolve() const {
    ModelConfig c = cfg;
    c.d1 = c.d2 = c.d;
    c.validate();
    return c;
  }
};

struct AugFlags {
  std::string stages;
  std::string snr = "1:10";
  std::string ts = "0.8:1.2";
  std::string noise_dir;
  std::string ir_dir;
  std::size_t noise_count;
  std::size_t ir_count;
  std::uint64_t pool_seed;

  AugFlags(std::string default_stages, std::size_t noises, std::size_t irs, std::uint64_t seed)
      : stages(std::move(default_stages)), noise_count(noises), ir_count(irs), pool_seed(seed) {}

  void add(CLI::App* app) {
    app->add_option("--aug", stages, "distortion stages: comma list of ts,bg,ir or none");
    app->add_option("--snr", snr, "background SNR range in dB, lo:hi");
    app->add_option("--ts", ts, "time-stretch factor range, lo:hi");
    app->add_option("--noise-dir", noise_dir, "directory of background noise WAVs (default: synthetic pool)");
    app->add_option("--ir-dir", ir_dir, "directory of impulse response WAVs (default: synthetic pool)");
    app->add_option("--noise-count", noise_count, "synthetic noise pool size");
    app->add_option("--ir-count", ir_count, "synthetic impulse response pool size");
    app->add_option("--pool-seed", pool_seed, "seed of the synthetic pools");
  }

  AugmentConfig resolve() const {
    AugmentConfig c;
    set_stages(c, stages);
    c.snr_range_db = parse_range(snr);
    c.ts_range = parse_range(ts);
    if (c.enable_bg)
      c.bg_pool = noise_dir.empty() ? synthetic_noise_pool(noise_count, 5.0, pool_seed) : load_corpus(noise_dir).audio;
    if (c.enable_ir) c.ir_pool = ir_dir.empty() ? synthetic_ir_pool(ir_count, pool_seed + 1) : load_corpus(ir_dir).audio;
    c.validate();
    return c;
  }
};

inline json option_values(const CLI::App* app) {
  json j = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "version" || name == "config" || name.empty()) continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      if (r.size() == 1) j[name] = r.front();
      else j[name] = r;
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

/// Writes `<artifact>.manifest.json` (or `<dir>/manifest.json`).
inline void write_manifest(const fs::path& artifact, const std::string& command, const json& flags, const json& extra = json::object()) {
  json m;
  m["tool"] = "vlafp";
  m["version"] = kVersion;
  m["command"] = command;
  m["flags"] = flags;
  m["config_digest"] = digest(flags.dump());
  for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
  const fs::path path = fs::is_directory(artifact) ? artifact / "manifest.json" : fs::path(artifact.string() + ".manifest.json");
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot write " + path.string());
  out << m.dump(2) << '\n';
}

template <typename T>
Fingerprinter<T> load_fingerprinter(const std::string& ckpt, std::size_t threads) {
  auto ck = load_checkpoint<T>(ckpt);
  Fingerprinter<T> fp;
  fp.weights = std::move(ck.weights);
  fp.config = ck.config;
  fp.threads = threads;
  return fp;
}

/// Open output: the file, or `fallback` when the path is empty or "-".
class Output {
 public:
  Output(const std::string& path, std::ostream& fallback) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      require(static_cast<bool>(file_), "cannot write " + path);
    }
    os_ = file_.is_open() ? &file_ : &fallback;
  }
  std::ostream& operator*() { return *os_; }

 private:
  std::ofstream file_;
  std::ostream* os_;
};

struct Context {
  std::ostream& out;
  std::ostream& err;
  std::size_t threads = 1;
};

inline std::string read_magic(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  char buf[4] = {};
  in.read(buf, 4);
  return std::string(buf, static_cast<std::size_t>(in.gcount()));
}

/// Appends `--key value` for config-file keys not given on the command line.
inline std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i + 1 < args.size(); ++i)
    if (args[i] == "--config") {
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw Error("no such file: " + path);
  std::set<std::string> given;
  for (const auto& a : args)
    if (a.rfind("--", 0) == 0) given.insert(a.substr(2, a.find('=') == std::string::npos ? std::string::npos : a.find('=') - 2));
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || given.count(key)) continue;
    args.push_back("--" + key);
    args.push_back(value);
  }
  return args;
}

inline int dispatch(const std::vector<std::string>& argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Variable-length audio fingerprinting toolkit", "vlafp"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(kVersion));
  Context ctx{out, err};
  app.add_option("--threads", ctx.threads, "worker threads (1 = deterministic mode)")->check(CLI::PositiveNumber);
  app.add_option("--config", "key=value file; command-line flags take precedence");

  std::function<void()> run;
  std::string command;

  // synth
  SynthSpec synth_spec;
  std::string synth_out;
  double synth_dur = 10.0;
  double synth_min_dur = 0.0;
  auto* synth = app.add_subcommand("synth", "generate a synthetic audio corpus");
  synth->add_option("--n", synth_spec.n_audios, "number of audios");
  synth->add_option("--dur", synth_dur, "duration in seconds (maximum if --min-dur is set)");
  synth->add_option("--min-dur", synth_min_dur, "minimum duration in seconds (default: --dur)");
  synth->add_option("--seed", synth_spec.seed, "random seed");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->callback([&] {
    command = "synth";
    run = [&] {
      synth_spec.max_duration = synth_dur;
      synth_spec.min_duration = synth_min_dur > 0.0 ? synth_min_dur : synth_dur;
      const auto corpus = generate(synth_spec);
      fs::create_directories(synth_out);
      json files = json::array();
      for (std::size_t i = 0; i < corpus.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "audio_%04zu.wav", i);
        write_wav(fs::path(synth_out) / name, corpus[i]);
        files.push_back(name);
      }
      write_manifest(synth_out, command, option_values(synth), {{"files", files}});
      ctx.out << "wrote " << corpus.size() << " audios to " << synth_out << '\n';
    };
  });

  // segment
  SegmentFlags seg_flags;
  std::string seg_input, seg_out;
  auto* seg = app.add_subcommand("segment", "segment audio files and write a CSV manifest");
  seg->add_option("--input", seg_input, "audio file or directory")->required();
  seg->add_option("--out", seg_out, "CSV output (default: stdout)");
  seg_flags.add(seg);
  seg->callback([&] {
    command = "segment";
    run = [&] {
      const auto cfg = seg_flags.resolve();
      const auto corpus = load_corpus(seg_input);
      std::vector<std::vector<Segment>> all(corpus.audio.size());
      parallel_for(all.size(), ctx.threads, [&](std::size_t i) { all[i] = segment(corpus.audio[i], cfg, i); });
      Output o(seg_out, ctx.out);
      *o << "audio_id,start_time_s,duration_s,method,theta\n" << std::setprecision(9);
      std::size_t total = 0;
      for (const auto& segs : all)
        for (const auto& s : segs) {
          *o << s.audio_id << ',' << s.start_time << ',' << s.duration << ',' << to_string(cfg.method) << ','
             << format_theta(cfg.theta) << '\n';
          ++total;
        }
      if (!seg_out.empty() && seg_out != "-") {
        json files = json::array();
        for (const auto& p : corpus.paths) files.push_back(p.string());
        write_manifest(seg_out, command, option_values(seg), {{"files", files}});
        ctx.out << total << " segments from " << corpus.audio.size() << " files\n";
      }
    };
  });

  // train
  SegmentFlags train_seg;
  ModelFlags train_model;
  AugFlags train_aug("bg,ir", 64, 128, 1000);
  TrainConfig train_cfg;
  std::string train_corpus, train_out, train_loss_csv, train_init;
  train_cfg.epochs = 10;
  auto* tr = app.add_subcommand("train", "train a fingerprint model with supervised contrastive loss");
  tr->add_option("--corpus", train_corpus, "directory of training audio")->required();
  tr->add_option("--out", train_out, "checkpoint output (.vlfp)")->required();
  tr->add_option("--epochs", train_cfg.epochs, "training epochs");
  tr->add_option("--lr", train_cfg.lr, "Adam learning rate");
  tr->add_option("--tau", train_cfg.tau, "SupCon temperature");
  tr->add_option("--npos", train_cfg.n_pos, "positives per anchor");
  tr->add_option("--batch", train_cfg.batch_size, "batch size in items (anchors + positives)");
  tr->add_option("--seed", train_cfg.seed, "random seed");
  tr->add_option("--loss-csv", train_loss_csv, "loss history CSV (default: <out>.loss.csv)");
  tr->add_option("--init", train_init, "checkpoint to resume from");
  train_seg.add(tr);
  train_model.add(tr);
  train_aug.add(tr);
  tr->callback([&] {
    command = "train";
    run = [&] {
      train_cfg.threads = ctx.threads;
      const auto seg_cfg = train_seg.resolve();
      auto model_cfg = train_model.resolve();
      const auto aug = train_aug.resolve();
      const auto corpus = load_corpus(train_corpus);
      const auto segments = collect_segments(corpus.audio, seg_cfg);
      ctx.out << segments.size() << " training segments from " << corpus.audio.size() << " files\n";
      std::optional<Weights<float>> init;
      if (!train_init.empty()) {
        auto ck = load_checkpoint<float>(train_init);
        model_cfg = ck.config;
        init = std::move(ck.weights);
      }
      const auto result = train(segments, model_cfg, train_cfg, aug, init ? &*init : nullptr, [&](const EpochReport& r) {
        ctx.out << "epoch " << r.epoch << " mean_loss " << r.mean_loss << '\n' << std::flush;
      });
      save_checkpoint(train_out, model_cfg, result.weights);
      const std::string loss_path = train_loss_csv.empty() ? train_out + ".loss.csv" : train_loss_csv;
      std::ofstream loss(loss_path);
      require(static_cast<bool>(loss), "cannot write " + loss_path);
      loss << "epoch,mean_loss\n" << std::setprecision(9);
      for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) loss << e << ',' << result.epoch_loss[e] << '\n';
      write_manifest(train_out, command, option_values(tr),
                     {{"segments", segments.size()}, {"parameters", parameter_count(result.weights)}});
    };
  });

  // fingerprint
  SegmentFlags fp_seg;
  std::string fp_ckpt, fp_input, fp_out;
  std::uint64_t fp_id_offset = 0;
  auto* fpc = app.add_subcommand("fingerprint", "segment and fingerprint audio into a .vlix file");
  fpc->add_option("--ckpt", fp_ckpt, "model checkpoint")->required();
  fpc->add_option("--input", fp_input, "audio file or directory")->required();
  fpc->add_option("--out", fp_out, "fingerprint output (.vlix)")->required();
  fpc->add_option("--id-offset", fp_id_offset, "audio id of the first input file");
  fp_seg.add(fpc);
  fpc->callback([&] {
    command = "fingerprint";
    run = [&] {
      const auto fp = load_fingerprinter<float>(fp_ckpt, ctx.threads);
      const auto seg_cfg = fp_seg.resolve();
      const auto corpus = load_corpus(fp_input);
      std::vector<std::uint64_t> ids(corpus.audio.size());
      json files = json::object();
      for (std::size_t i = 0; i < ids.size(); ++i) {
        ids[i] = fp_id_offset + i;
        files[std::to_string(ids[i])] = corpus.paths[i].string();
      }
      FingerprintIndex idx(fp.config.d);
      index_audios(idx, fp, corpus.audio, ids, seg_cfg);
      idx.save(fp_out);
      write_manifest(fp_out, command, option_values(fpc), {{"audio_ids", files}, {"count", idx.size()}});
      ctx.out << idx.size() << " fingerprints from " << corpus.audio.size() << " files\n";
    };
  });

  // index
  auto* index_cmd = app.add_subcommand("index", "build or query a fingerprint index");
  index_cmd->require_subcommand(1);
  std::vector<std::string> build_inputs;
  std::string build_out;
  auto* build = index_cmd->add_subcommand("build", "merge fingerprint files into one index");
  build->add_option("--fingerprints", build_inputs, "fingerprint files (.vlix)")->required();
  build->add_option("--out", build_out, "index output (.vlix)")->required();
  build->callback([&] {
    command = "index build";
    run = [&] {
      FingerprintIndex idx;
      for (const auto& path : build_inputs) {
        const auto part = FingerprintIndex::load(path);
        for (const auto& e : part.entries()) idx.insert(e);
      }
      idx.save(build_out);
      write_manifest(build_out, command, option_values(build), {{"count", idx.size()}, {"dim", idx.dim()}});
      ctx.out << "indexed " << idx.size() << " fingerprints (dim " << idx.dim() << ")\n";
    };
  });
  std::string query_idx, query_fps, query_input, query_ckpt, query_out;
  std::size_t query_k = 1;
  SegmentFlags query_seg;
  auto* query = index_cmd->add_subcommand("query", "top-k search for query fingerprints or audio");
  query->add_option("--idx", query_idx, "index file")->required();
  query->add_option("--k", query_k, "results per query")->check(CLI::PositiveNumber);
  query->add_option("--queries", query_fps, "query fingerprints (.vlix)");
  query->add_option("--input", query_input, "query audio file or directory (needs --ckpt)");
  query->add_option("--ckpt", query_ckpt, "model checkpoint for --input");
  query->add_option("--out", query_out, "CSV output (default: stdout)");
  query_seg.add(query);
  query->callback([&] {
    command = "index query";
    run = [&] {
      const auto idx = FingerprintIndex::load(query_idx);
      FingerprintIndex queries;
      if (!query_fps.empty()) {
        queries = FingerprintIndex::load(query_fps);
      } else {
        require(!query_input.empty() && !query_ckpt.empty(), "index query: need --queries, or --input with --ckpt");
        const auto fp = load_fingerprinter<float>(query_ckpt, ctx.threads);
        const auto corpus = load_corpus(query_input);
        std::vector<std::uint64_t> ids(corpus.audio.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
        queries = FingerprintIndex(fp.config.d);
        index_audios(queries, fp, corpus.audio, ids, query_seg.resolve());
      }
      std::vector<std::vector<float>> qv;
      for (const auto& e : queries.entries()) qv.push_back(e.vector);
      const auto results = idx.search_many(qv, query_k, ctx.threads);
      Output o(query_out, ctx.out);
      *o << "query_audio_id,query_segment_ord,query_start_s,rank,audio_id,segment_ord,start_s,score\n" << std::setprecision(9);
      for (std::size_t q = 0; q < results.size(); ++q) {
        const auto& qe = queries.entry(q);
        for (std::size_t r = 0; r < results[q].size(); ++r) {
          const auto& e = idx.entry(results[q][r].entry);
          *o << qe.audio_id << ',' << qe.segment_ord << ',' << qe.start_time << ',' << r + 1 << ',' << e.audio_id << ','
             << e.segment_ord << ',' << e.start_time << ',' << results[q][r].score << '\n';
        }
      }
    };
  });

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "run the CBR or DTR evaluation protocol");
  eval_cmd->require_subcommand(1);
  std::string cbr_ckpt, cbr_corpus, cbr_out, cbr_scores;
  std::size_t cbr_commercials = 1, cbr_others = 19;
  std::uint64_t cbr_seed = 0;
  SegmentFlags cbr_seg;
  AugFlags cbr_aug("ts,bg,ir", 16, 16, 2000);
  auto* cbr = eval_cmd->add_subcommand("cbr", "commercial-broadcast retrieval");
  cbr->add_option("--ckpt", cbr_ckpt, "model checkpoint")->required();
  cbr->add_option("--corpus", cbr_corpus, "directory of audio; the first --commercials files are commercials")->required();
  cbr->add_option("--commercials", cbr_commercials, "number of commercials to evaluate");
  cbr->add_option("--others", cbr_others, "other audios per simulated broadcast");
  cbr->add_option("--seed", cbr_seed, "random seed");
  cbr->add_option("--out", cbr_out, "threshold sweep CSV (default: stdout)");
  cbr->add_option("--scores", cbr_scores, "raw per-segment score dump CSV");
  cbr_seg.add(cbr);
  cbr_aug.add(cbr);
  cbr->callback([&] {
    command = "eval cbr";
    run = [&] {
      const auto fp = load_fingerprinter<float>(cbr_ckpt, ctx.threads);
      const auto seg_cfg = cbr_seg.resolve();
      const auto aug = cbr_aug.resolve();
      const auto corpus = load_corpus(cbr_corpus);
      require(cbr_commercials >= 1 && cbr_commercials <= corpus.audio.size(), "eval cbr: --commercials out of range");
      require(corpus.audio.size() >= cbr_others + 1,
              "eval cbr: corpus has " + std::to_string(corpus.audio.size()) + " audios, need --others + 1");
      Rng rng(cbr_seed);
      Output o(cbr_out, ctx.out);
      std::unique_ptr<Output> scores;
      if (!cbr_scores.empty()) scores = std::make_unique<Output>(cbr_scores, ctx.out);
      *o << "commercial_id,threshold,tp,fp,fn,precision,recall,f1\n" << std::setprecision(9);
      if (scores) **scores << "commercial_id,start_s,duration_s,score,positive\n" << std::setprecision(9);
      double sp = 0.0, sr = 0.0, sf = 0.0;
      for (std::size_t c = 0; c < cbr_commercials; ++c) {
        std::vector<std::size_t> pool;
        for (std::size_t i = 0; i < corpus.audio.size(); ++i)
          if (i != c) pool.push_back(i);
        rng.shuffle(pool.begin(), pool.end());
        std::vector<Waveform> others;
        for (std::size_t i = 0; i < cbr_others; ++i) others.push_back(corpus.audio[pool[i]]);
        BroadcastOptions opts;
        opts.n_others = cbr_others;
        Rng run_rng = rng.derive(c);
        const auto r = run_cbr(fp, corpus.audio[c], c, others, seg_cfg, aug, run_rng, opts);
        for (const auto& row : r.result.sweep)
          *o << c << ',' << row.threshold << ',' << row.tp << ',' << row.fp << ',' << row.fn << ',' << row.precision << ','
             << row.recall << ',' << row.f1 << '\n';
        if (scores)
          for (const auto& s : r.scored)
            **scores << c << ',' << s.start << ',' << s.duration << ',' << s.score << ',' << (s.positive ? 1 : 0) << '\n';
        sp += r.result.best.precision;
        sr += r.result.best.recall;
        sf += r.result.best.f1;
        ctx.err << "commercial " << c << ": best threshold " << r.result.best.threshold << " P " << r.result.best.precision
                << " R " << r.result.best.recall << " F1 " << r.result.best.f1 << '\n';
      }
      const double n = static_cast<double>(cbr_commercials);
      *o << "summary,best,,,," << sp / n << ',' << sr / n << ',' << sf / n << '\n';
      if (!cbr_out.empty() && cbr_out != "-") write_manifest(cbr_out, command, option_values(cbr), {{"mean_f1", sf / n}});
    };
  });

  std::string dtr_ckpt, dtr_targets, dtr_dummies, dtr_out, dtr_queries_csv, dtr_durations = "1,2,3,5,6,10";
  std::size_t dtr_per_target = 1;
  std::uint64_t dtr_seed = 0;
  SegmentFlags dtr_seg;
  dtr_seg.method = "fixed";
  AugFlags dtr_aug("bg,ir", 16, 16, 2000);
  auto* dtr = eval_cmd->add_subcommand("dtr", "dummy-target retrieval");
  dtr->add_option("--ckpt", dtr_ckpt, "model checkpoint")->required();
  dtr->add_option("--targets", dtr_targets, "directory of target audio (queried)")->required();
  dtr->add_option("--dummies", dtr_dummies, "directory of dummy audio (database only)");
  dtr->add_option("--durations", dtr_durations, "query durations in seconds, comma separated");
  dtr->add_option("--per-target", dtr_per_target, "queries per target and duration");
  dtr->add_option("--seed", dtr_seed, "random seed");
  dtr->add_option("--out", dtr_out, "hit-rate CSV (default: stdout)");
  dtr->add_option("--queries-csv", dtr_queries_csv, "per-query result dump CSV");
  dtr_seg.add(dtr);
  dtr_aug.add(dtr);
  dtr->callback([&] {
    command = "eval dtr";
    run = [&] {
      const auto fp = load_fingerprinter<float>(dtr_ckpt, ctx.threads);
      const auto seg_cfg = dtr_seg.resolve();
      const auto aug = dtr_aug.resolve();
      const auto durations = parse_list(dtr_durations);
      const auto targets = load_corpus(dtr_targets);
      std::vector<std::uint64_t> target_ids(targets.audio.size());
      for (std::size_t i = 0; i < target_ids.size(); ++i) target_ids[i] = i;
      FingerprintIndex db(fp.config.d);
      index_audios(db, fp, targets.audio, target_ids, seg_cfg);
      if (!dtr_dummies.empty()) {
        const auto dummies = load_corpus(dtr_dummies);
        std::vector<std::uint64_t> ids(dummies.audio.size());
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = target_ids.size() + i;
        index_audios(db, fp, dummies.audio, ids, seg_cfg);
      }
      Rng rng(dtr_seed);
      DtrQueryOptions qo;
      qo.per_target = dtr_per_target;
      const auto queries = make_dtr_queries(targets.audio, target_ids, durations, aug, rng, qo);
      const auto report = dtr_evaluate(db, fp, queries);
      Output o(dtr_out, ctx.out);
      write_dtr_csv(*o, report);
      if (!dtr_queries_csv.empty()) {
        Output q(dtr_queries_csv, ctx.out);
        write_dtr_queries_csv(*q, report);
      }
      if (!dtr_out.empty() && dtr_out != "-") {
        json rates = json::object();
        for (const auto& [k, rate] : report.hit_rates) rates[format_theta(k)] = rate;
        write_manifest(dtr_out, command, option_values(dtr), {{"database_size", db.size()}, {"hit_rates", rates}});
      }
    };
  });

  // inspect
  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "describe a checkpoint, index, audio or CSV file");
  inspect->add_option("path", inspect_path, "file to inspect")->required();
  inspect->callback([&] {
    command = "inspect";
    run = [&] {
      if (!fs::exists(inspect_path)) throw Error("no such file: " + inspect_path);
      json info;
      info["path"] = inspect_path;
      info["bytes"] = fs::file_size(inspect_path);
      const std::string magic = read_magic(inspect_path);
      if (magic == "VLFP") {
        const auto ck = load_checkpoint<float>(inspect_path);
        const auto& c = ck.config;
        info["kind"] = "checkpoint";
        info["config"] = {{"f_bins", c.f_bins}, {"d1", c.d1},           {"d2", c.d2},        {"d", c.d},
                          {"n_blocks", c.n_blocks}, {"n_heads", c.n_heads}, {"d_head", c.d_head}, {"ffn_alpha", c.ffn_alpha},
                          {"eps", c.eps},           {"ffn_hidden", c.ffn_hidden()}};
        info["parameters"] = parameter_count(ck.weights);
        json tensors = json::object();
        visit_weights(
            [&](const std::string& name, const Matrix<float>& m) { tensors[name] = {m.rows(), m.cols()}; }, ck.weights);
        info["tensors"] = tensors;
      } else if (magic == "VLIX") {
        const auto idx = FingerprintIndex::load(inspect_path);
        std::set<std::uint64_t> audios;
        for (const auto& e : idx.entries()) audios.insert(e.audio_id);
        info["kind"] = "index";
        info["dim"] = idx.dim();
        info["count"] = idx.size();
        info["audios"] = audios.size();
      } else if (magic == "RIFF" || fs::path(inspect_path).extension() == ".f32" || fs::path(inspect_path).extension() == ".raw") {
        const auto w = load_audio(inspect_path);
        info["kind"] = "audio";
        info["sample_rate"] = w.sample_rate;
        info["samples"] = w.size();
        info["duration_s"] = w.duration();
        info["peak"] = peak_abs(w.samples);
      } else {
        std::ifstream in(inspect_path);
        std::string header, line;
        std::getline(in, header);
        std::size_t rows = 0;
        while (std::getline(in, line)) ++rows;
        info["kind"] = "text";
        info["header"] = header;
        info["rows"] = rows;
      }
      ctx.out << info.dump(2) << '\n';
    };
  });

  try {
    std::vector<std::string> args = apply_config_file(argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    const CLI::App* failing = &app;
    for (const CLI::App* sub = &app; sub;) {
      const auto subs = sub->get_subcommands();
      sub = subs.empty() ? nullptr : subs.front();
      if (sub) failing = sub;
    }
    err << failing->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  try {
    if (run) run();
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace vlafp::cli
