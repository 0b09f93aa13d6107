#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "stdiff/config.hpp"
#include "stdiff/data.hpp"
#include "stdiff/denoiser.hpp"
#include "stdiff/io.hpp"
#include "stdiff/metrics.hpp"
#include "stdiff/schedule.hpp"
#include "stdiff/viz.hpp"
#include "stdiff/wavelet.hpp"

namespace fs = std::filesystem;
using namespace stdiff;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw SpecError("cannot write " + path.string());
  out << text;
}

void persist_config(const fs::path& dir, const RunConfig& cfg) {
  fs::create_directories(dir);
  write_text(dir / "config.json", cfg.resolved().dump(2) + "\n");
}

std::vector<Matrix> rescale_samples(const SamplesArtifact& art) {
  SeriesBatch scaler;
  scaler.scale_min = art.scaling.scale_min;
  scaler.scale_max = art.scaling.scale_max;
  std::vector<Matrix> out;
  out.reserve(art.windows.size());
  for (const Matrix& w : art.windows) out.push_back(scale_window(w, scaler));
  return out;
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::uint64_t* seed,
              const std::string* out) {
  RunConfig cfg;
  SeriesBatch data;
  try {
    cfg = load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out = *out;
    if (cfg.dataset.empty())
      throw SpecError("config: dataset.path is required for train");
    RawSeries raw = load_csv(cfg.dataset, cfg.columns);
    data = make_windows(raw, cfg.window, cfg.stride);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    NoiseSchedule sch = cfg.make_schedule();
    Denoiser model(cfg.denoiser_config(data.channels()), cfg.seed);
    persist_config(cfg.out, cfg);
    std::cout << "training on " << data.windows.size() << " windows (L="
              << data.length() << ", K=" << data.channels() << ", "
              << model.store().scalar_count() << " parameters)\n";
    TrainState state =
        model.train(data, sch, cfg.epochs, cfg.batch, cfg.lr, cfg.seed,
                    [](int epoch, Scalar loss) {
                      std::cout << "epoch " << epoch << " loss " << loss << "\n";
                    });
    std::string curve = "epoch,loss\n";
    for (std::size_t i = 0; i < state.denoise_loss.size(); ++i)
      curve += std::to_string(i) + "," + std::to_string(state.denoise_loss[i]) +
               "\n";
    write_text(fs::path(cfg.out) / "loss.csv", curve);
    ScalingMeta meta{data.scale_min, data.scale_max, data.feature_names};
    save_checkpoint((fs::path(cfg.out) / "checkpoint").string(), model.store(),
                    cfg.resolved(), meta);
    std::cout << "checkpoint written to " << cfg.out << "/checkpoint\n";
    return kExitOk;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

// ---- sample ----

int cmd_sample(const std::string& checkpoint, int n, const std::uint64_t* seed,
               const std::string& out) {
  CheckpointHeader header;
  RunConfig cfg;
  try {
    header = read_checkpoint_header(checkpoint);
    cfg = parse_run_config(header.config);
    if (n < 0) throw SpecError("sample: --n must be >= 0");
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    const Eigen::Index K = header.scaling.scale_min.size();
    std::uint64_t sample_seed = seed ? *seed : cfg.seed;
    Denoiser model(cfg.denoiser_config(K), cfg.seed);
    load_checkpoint_params(checkpoint, header, model.store());
    NoiseSchedule sch = cfg.make_schedule();
    std::vector<Matrix> scaled =
        sample(model.as_denoise_fn(sch), n, cfg.window, K, sch, sample_seed);
    SeriesBatch scaler;
    scaler.scale_min = header.scaling.scale_min;
    scaler.scale_max = header.scaling.scale_max;
    std::vector<Matrix> unscaled;
    unscaled.reserve(scaled.size());
    for (const Matrix& w : scaled) unscaled.push_back(unscale_window(w, scaler));
    cfg.seed = sample_seed;
    cfg.out = out;
    save_samples(out, unscaled, cfg.window, K, header.scaling,
                 fnv1a64(header.config.dump()));
    persist_config(out, cfg);
    std::cout << "wrote " << unscaled.size() << " windows to " << out << "\n";
    return kExitOk;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

// ---- evaluate ----

int cmd_evaluate(const std::string& dataset, const std::string& samples_dir,
                 const int* trials, const std::string* config_path,
                 const std::uint64_t* seed, const std::string& out) {
  RunConfig cfg;
  SamplesArtifact art;
  SeriesBatch real;
  try {
    if (config_path) cfg = load_run_config(*config_path);
    if (trials) {
      cfg.trials = *trials;
      if (cfg.trials < 1) throw SpecError("evaluate: --trials must be >= 1");
    }
    cfg.metrics.trials = cfg.trials;
    if (seed) cfg.seed = *seed;
    art = load_samples(samples_dir);
    const Eigen::Index L = art.manifest.at("shape").at(1).get<Eigen::Index>();
    const Eigen::Index K = art.manifest.at("shape").at(2).get<Eigen::Index>();
    RawSeries raw = load_csv(dataset, cfg.columns);
    if (raw.values.cols() != K)
      throw SpecError("evaluate: dataset has " +
                      std::to_string(raw.values.cols()) +
                      " features but samples have " + std::to_string(K));
    cfg.window = L;
    real = make_windows(raw, L, cfg.stride);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    std::vector<Matrix> synth = rescale_samples(art);
    EvaluationReport report =
        evaluate_all(real.windows, synth, cfg.metrics, cfg.seed);
    cfg.out = out;
    persist_config(out, cfg);
    write_text(fs::path(out) / "report.json", report.to_json().dump(2) + "\n");
    write_text(fs::path(out) / "report.txt", report.to_text());
    std::cout << report.to_text();
    return kExitOk;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

// ---- decompose ----

int cmd_decompose(const std::string& dataset, const std::string* checkpoint,
                  const std::string* config_path, const std::string& out) {
  RunConfig cfg;
  CheckpointHeader header;
  SeriesBatch data;
  try {
    if (checkpoint) {
      header = read_checkpoint_header(*checkpoint);
      cfg = parse_run_config(header.config);
    } else if (config_path) {
      cfg = load_run_config(*config_path);
    }
    RawSeries raw = load_csv(dataset, cfg.columns);
    data = make_windows(raw, cfg.window, cfg.stride);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    const Eigen::Index K = data.channels();
    Denoiser model(cfg.denoiser_config(K), cfg.seed);
    if (checkpoint) load_checkpoint_params(*checkpoint, header, model.store());
    fs::create_directories(out);
    ad::NoGradGuard guard;

    std::ofstream trend_out(fs::path(out) / "trend.tsv");
    std::ofstream seas_out(fs::path(out) / "seasonal.tsv");
    auto head = [&](std::ofstream& f) {
      f << "window\tt";
      for (Eigen::Index k = 0; k < K; ++k) f << "\tch" << k;
      f << "\n";
    };
    head(trend_out);
    head(seas_out);
    Matrix weight_sum;
    for (std::size_t i = 0; i < data.windows.size(); ++i) {
      auto dec = model.lma().decompose(ad::constant(data.windows[i]));
      auto dump = [&](std::ofstream& f, const Matrix& m) {
        for (Eigen::Index t = 0; t < m.rows(); ++t) {
          f << i << "\t" << t;
          for (Eigen::Index k = 0; k < K; ++k) f << "\t" << m(t, k);
          f << "\n";
        }
      };
      dump(trend_out, dec.trend->value);
      dump(seas_out, dec.seasonal->value);
      if (dec.weights) {
        if (weight_sum.size() == 0)
          weight_sum = Matrix::Zero(dec.weights->value.rows(),
                                    dec.weights->value.cols());
        weight_sum += dec.weights->value;
      }
    }
    if (weight_sum.size() > 0) {
      weight_sum /= static_cast<Scalar>(data.windows.size());
      std::vector<std::string> header_row;
      for (int k : model.lma().kernels())
        header_row.push_back("kernel_" + std::to_string(k));
      write_table((fs::path(out) / "weights.tsv").string(), weight_sum,
                  header_row);
    }
    // learned (or initial) wavelet functions on a dyadic grid
    RowVector h = model.seasonal().lowpass()->value.row(0);
    WaveletFunctionTable table = cascade(h);
    Matrix wt(static_cast<Eigen::Index>(table.t.size()), 3);
    for (std::size_t i = 0; i < table.t.size(); ++i) {
      wt(static_cast<Eigen::Index>(i), 0) = table.t[i];
      wt(static_cast<Eigen::Index>(i), 1) = table.phi[i];
      wt(static_cast<Eigen::Index>(i), 2) = table.psi[i];
    }
    write_table((fs::path(out) / "wavelet.tsv").string(), wt,
                {"t", "phi", "psi"});
    persist_config(out, cfg);
    std::cout << "decomposition written to " << out << "\n";
    return kExitOk;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

// ---- plot ----

int cmd_plot(const std::string& dataset, const std::string& samples_dir,
             const std::string* config_path, const std::uint64_t* seed,
             const std::string& out) {
  RunConfig cfg;
  SamplesArtifact art;
  SeriesBatch real;
  try {
    if (config_path) cfg = load_run_config(*config_path);
    if (seed) cfg.seed = *seed;
    art = load_samples(samples_dir);
    if (art.windows.empty()) throw SpecError("plot: samples artifact is empty");
    const Eigen::Index L = art.manifest.at("shape").at(1).get<Eigen::Index>();
    const Eigen::Index K = art.manifest.at("shape").at(2).get<Eigen::Index>();
    RawSeries raw = load_csv(dataset, cfg.columns);
    if (raw.values.cols() != K)
      throw SpecError("plot: feature count mismatch between corpora");
    real = make_windows(raw, L, cfg.stride);
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  try {
    std::vector<Matrix> synth = rescale_samples(art);
    fs::create_directories(out);

    Matrix real_flat = flatten_windows(real.windows);
    Matrix synth_flat = flatten_windows(synth);
    Pca2 pca = fit_pca2(real_flat);
    Matrix pr = pca.project(real_flat);
    Matrix ps = pca.project(synth_flat);
    write_table((fs::path(out) / "pca_real.tsv").string(), pr, {"pc1", "pc2"});
    write_table((fs::path(out) / "pca_synth.tsv").string(), ps, {"pc1", "pc2"});
    write_scatter_svg((fs::path(out) / "pca.svg").string(), pr, ps,
                      "PCA (red: real, blue: generated)");

    // t-SNE on a seeded subsample, capped for the quadratic cost
    const Eigen::Index cap = 250;
    Rng rng(cfg.seed);
    auto pick_rows = [&](const Matrix& m) {
      std::vector<Eigen::Index> idx(m.rows());
      for (Eigen::Index i = 0; i < m.rows(); ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), rng);
      Eigen::Index n = std::min(cap, m.rows());
      Matrix sub(n, m.cols());
      for (Eigen::Index i = 0; i < n; ++i) sub.row(i) = m.row(idx[i]);
      return sub;
    };
    Matrix tr = pick_rows(real_flat);
    Matrix ts = pick_rows(synth_flat);
    Matrix combined(tr.rows() + ts.rows(), tr.cols());
    combined << tr, ts;
    Matrix emb = tsne2(combined, 30.0, cfg.seed);
    Matrix emb_real = emb.topRows(tr.rows());
    Matrix emb_synth = emb.bottomRows(ts.rows());
    Matrix tsne_table(emb.rows(), 3);
    tsne_table.leftCols(2) = emb;
    tsne_table.col(2) =
        (Vector(emb.rows()) << Vector::Ones(tr.rows()), Vector::Zero(ts.rows()))
            .finished();
    write_table((fs::path(out) / "tsne.tsv").string(), tsne_table,
                {"dim1", "dim2", "is_real"});
    write_scatter_svg((fs::path(out) / "tsne.svg").string(), emb_real,
                      emb_synth, "t-SNE (red: real, blue: generated)");

    Vector vr = pooled_values(real.windows);
    Vector vs = pooled_values(synth);
    Scalar lo = std::min(vr.minCoeff(), vs.minCoeff());
    Scalar hi = std::max(vr.maxCoeff(), vs.maxCoeff());
    Scalar pad = 0.05 * std::max(hi - lo, 1e-6);
    Vector grid = linspace(lo - pad, hi + pad, 128);
    Vector dr = kde_on_grid(vr, grid);
    Vector ds = kde_on_grid(vs, grid);
    Matrix density(grid.size(), 3);
    density.col(0) = grid;
    density.col(1) = dr;
    density.col(2) = ds;
    write_table((fs::path(out) / "density.tsv").string(), density,
                {"x", "real", "synth"});
    write_curves_svg((fs::path(out) / "density.svg").string(), grid, dr, ds,
                     "Density (red: real, blue: generated)");
    std::cout << "figure data written to " << out << "\n";
    return kExitOk;
  } catch (const SpecError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-based multivariate time-series generation"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint, dataset, samples;
  std::uint64_t seed = 0;
  int n_windows = 64;
  int trials = 5;

  auto* train = app.add_subcommand("train", "train a model from a config file");
  auto* t_cfg = train->add_option("--config", config_path, "config file")
                    ->required();
  auto* t_seed = train->add_option("--seed", seed, "run seed");
  auto* t_out = train->add_option("--out", out_dir, "output directory");

  auto* smp = app.add_subcommand("sample", "draw windows from a checkpoint");
  smp->add_option("checkpoint", checkpoint, "checkpoint directory")->required();
  smp->add_option("--n", n_windows, "number of windows");
  auto* s_seed = smp->add_option("--seed", seed, "sampling seed");
  smp->add_option("--out", out_dir, "output directory")->required();

  auto* eval = app.add_subcommand("evaluate", "score samples against a dataset");
  eval->add_option("dataset", dataset, "real dataset CSV")->required();
  eval->add_option("samples", samples, "samples directory")->required();
  auto* e_trials = eval->add_option("--trials", trials, "evaluation trials");
  auto* e_cfg = eval->add_option("--config", config_path, "config file");
  auto* e_seed = eval->add_option("--seed", seed, "evaluation seed");
  eval->add_option("--out", out_dir, "output directory")->required();

  auto* dec = app.add_subcommand("decompose", "dump trend/seasonal components");
  dec->add_option("dataset", dataset, "dataset CSV")->required();
  auto* d_ckpt = dec->add_option("--checkpoint", checkpoint, "checkpoint directory");
  auto* d_cfg = dec->add_option("--config", config_path, "config file");
  dec->add_option("--out", out_dir, "output directory")->required();

  auto* plot = app.add_subcommand("plot", "emit PCA/t-SNE/density figure data");
  plot->add_option("dataset", dataset, "real dataset CSV")->required();
  plot->add_option("samples", samples, "samples directory")->required();
  auto* p_cfg = plot->add_option("--config", config_path, "config file");
  auto* p_seed = plot->add_option("--seed", seed, "seed");
  plot->add_option("--out", out_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  (void)t_cfg;
  if (train->parsed())
    return cmd_train(config_path, t_seed->count() ? &seed : nullptr,
                     t_out->count() ? &out_dir : nullptr);
  if (smp->parsed())
    return cmd_sample(checkpoint, n_windows,
                      s_seed->count() ? &seed : nullptr, out_dir);
  if (eval->parsed())
    return cmd_evaluate(dataset, samples, e_trials->count() ? &trials : nullptr,
                        e_cfg->count() ? &config_path : nullptr,
                        e_seed->count() ? &seed : nullptr, out_dir);
  if (dec->parsed())
    return cmd_decompose(dataset, d_ckpt->count() ? &checkpoint : nullptr,
                         d_cfg->count() ? &config_path : nullptr, out_dir);
  if (plot->parsed())
    return cmd_plot(dataset, samples, p_cfg->count() ? &config_path : nullptr,
                    p_seed->count() ? &seed : nullptr, out_dir);
  return kExitUsage;
}
