// Command-line surface: synthetic dataset generation, reconstruction,
// training, evaluation, and ablation sweeps over the CPID1 file format.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "cupid/experiments.hpp"
#include "cupid/io.hpp"

namespace fs = std::filesystem;
using namespace cupid;

namespace {

uint64_t default_seed() {
    if (const char* env = std::getenv("CUPID_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw DataError("CUPID_SEED is not a number");
        }
    }
    return 1234;
}

nlohmann::json load_config_arg(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream f(argv[i + 1]);
            if (!f) throw DataError(std::string("cannot open config file: ") + argv[i + 1]);
            nlohmann::json j;
            f >> j;
            return j;
        }
    }
    return nlohmann::json::object();
}

template <typename T>
void from_cfg(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

DatasetFile build_dataset(const InstanceConfig& icfg, int pad_lines) {
    DatasetFile d;
    d.h = uint32_t(icfg.h);
    d.w = uint32_t(icfg.w);
    d.nc = uint32_t(icfg.nc);
    d.phantom_seed = icfg.phantom_seed();
    d.coil_seed = icfg.coil_seed();
    d.mask_seed = icfg.mask_seed();
    d.noise_seed = icfg.noise_seed();
    d.sigma = icfg.sigma;
    d.pi_method = icfg.pi_method;
    if (pad_lines > 0) {
        // acquisition grid smaller than the display grid: outer lines never sampled
        SamplingMask inner =
            make_mask(icfg.h - 2 * pad_lines, icfg.r, icfg.acs, icfg.kind, icfg.mask_seed());
        d.mask = embed_mask(inner, icfg.h);
        ComplexImage x_true = make_phantom(icfg.h, icfg.w, icfg.phantom_seed());
        CoilSensitivities coils = make_coils(icfg.h, icfg.w, icfg.nc, icfg.coil_seed());
        KSpaceData y =
            simulate_acquisition(x_true, coils, d.mask, NoiseModel{icfg.sigma}, icfg.noise_seed());
        EncodingOperator enc(coils, d.mask);
        ComplexImage x_pi = reconstruct_pi(y, enc, icfg.pi_method, icfg.pi_cg);
        set_dataset_payload(d, x_true, coils, y, x_pi);
    } else {
        Instance inst = make_instance(icfg);
        d.mask = inst.mask;
        set_dataset_payload(d, inst.x_true, inst.coils, inst.y, inst.x_pi);
    }
    return d;
}

void write_views(const std::string& prefix, const ComplexImage& img, bool png) {
    write_image_file(prefix + ".cpimg", img);
    write_pgm16(prefix + ".pgm", img);
    if (png) write_png16(prefix + ".png", img);
}

struct SweepRow {
    std::string sweep, point;
    uint64_t seed = 0;
    double psnr_in = 0, psnr_out = 0, ssim_out = 0, seconds = 0;
};

void run_sweep_points(const std::vector<std::function<SweepRow()>>& jobs, int threads,
                      std::vector<SweepRow>& rows) {
    rows.assign(jobs.size(), SweepRow{});
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            rows[i] = jobs[i]();
        }
    };
    std::vector<std::thread> pool;
    for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

int run(int argc, char** argv) {
    nlohmann::json cfg = load_config_arg(argc, argv);

    CLI::App app{"synthetic multi-coil reconstruction workbench"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file with default option values");
    auto add_config_opt = [&config_path](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON file with default option values");
    };

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "synthesize dataset files");
    add_config_opt(gen);
    InstanceConfig icfg;
    icfg.seed = default_seed();
    std::string gen_out = "dataset.cpid", gen_kind = "equidistant";
    int gen_count = 1, pad_lines = 0;
    from_cfg(cfg, "h", icfg.h);
    from_cfg(cfg, "w", icfg.w);
    from_cfg(cfg, "coils", icfg.nc);
    from_cfg(cfg, "r", icfg.r);
    from_cfg(cfg, "acs", icfg.acs);
    from_cfg(cfg, "sigma", icfg.sigma);
    from_cfg(cfg, "seed", icfg.seed);
    from_cfg(cfg, "kind", gen_kind);
    from_cfg(cfg, "pi", icfg.pi_method);
    gen->add_option("--out", gen_out, "output path (prefix when --count > 1)");
    gen->add_option("--height", icfg.h, "image height");
    gen->add_option("--width", icfg.w, "image width");
    gen->add_option("--coils", icfg.nc, "receiver coil count");
    gen->add_option("--r", icfg.r, "nominal acceleration");
    gen->add_option("--acs", icfg.acs, "auto-calibration lines");
    gen->add_option("--kind", gen_kind)->check(CLI::IsMember({"equidistant", "random"}));
    gen->add_option("--sigma", icfg.sigma, "noise std per component");
    gen->add_option("--seed", icfg.seed, "base seed");
    gen->add_option("--pi", icfg.pi_method, "parallel-imaging input method")
        ->check(CLI::IsMember({"cgsense", "grappa"}));
    gen->add_option("--count", gen_count, "number of instances");
    gen->add_option("--pad-lines", pad_lines, "never-sampled display-grid lines per side");

    // ---- recon ----
    auto* rec = app.add_subcommand("recon", "reconstruct a dataset");
    add_config_opt(rec);
    std::string rec_method = "cgsense", rec_ds, rec_out = "recon", rec_ckpt;
    CgConfig rec_cg;
    CsConfig rec_cs;
    bool rec_png = false;
    rec->add_option("--method", rec_method)
        ->check(CLI::IsMember({"cgsense", "grappa", "cs", "model", "input", "reference"}));
    rec->add_option("--dataset", rec_ds)->required();
    rec->add_option("--out", rec_out, "output prefix");
    rec->add_option("--ckpt", rec_ckpt, "model checkpoint (method=model)");
    rec->add_option("--cg-iters", rec_cg.max_iter);
    rec->add_option("--cg-tol", rec_cg.tol);
    rec->add_option("--cs-iters", rec_cs.outer_iters);
    rec->add_option("--cs-cg", rec_cs.cg_steps);
    rec->add_option("--cs-thresh", rec_cs.threshold_scale);
    rec->add_option("--cs-mu", rec_cs.mu);
    rec->add_flag("--png", rec_png, "also write a PNG view");

    // ---- train ----
    auto* tr = app.add_subcommand("train", "train the unrolled network");
    add_config_opt(tr);
    std::string tr_loss = "cupid", tr_mode = "zeroshot", tr_run = "run";
    std::vector<std::string> tr_datasets;
    ModelConfig mcfg;
    TrainConfig tcfg;
    CupidLossConfig lcfg;
    EiConfig ei_cfg;
    double rho = 0.4;
    bool pif_only = false, train_mu = false, paper_scale = false;
    tcfg.seed = default_seed();
    from_cfg(cfg, "epochs", tcfg.epochs);
    from_cfg(cfg, "lr", tcfg.lr);
    from_cfg(cfg, "lambda", lcfg.lambda);
    from_cfg(cfg, "k", lcfg.k);
    from_cfg(cfg, "unrolls", mcfg.unrolls);
    from_cfg(cfg, "blocks", mcfg.blocks);
    from_cfg(cfg, "channels", mcfg.channels);
    from_cfg(cfg, "mu", mcfg.mu);
    tr->add_option("--loss", tr_loss)->check(CLI::IsMember({"cupid", "supervised", "ssdu", "ei"}));
    tr->add_option("--mode", tr_mode)->check(CLI::IsMember({"zeroshot", "database"}));
    tr->add_option("--dataset", tr_datasets, "CPID1 file(s) or a directory")->required();
    tr->add_option("--run-dir", tr_run, "output directory");
    tr->add_option("--epochs", tcfg.epochs);
    tr->add_option("--batch", tcfg.batch_size);
    tr->add_option("--lr", tcfg.lr);
    tr->add_option("--lr-halve-every", tcfg.lr_halve_every);
    tr->add_option("--clip", tcfg.clip_norm);
    tr->add_option("--seed", tcfg.seed);
    tr->add_option("--lambda", lcfg.lambda, "CUPID trade-off weight");
    tr->add_option("--k", lcfg.k, "CUPID perturbation count");
    tr->add_option("--m", lcfg.reweight_every, "CUPID reweighting cadence (epochs)");
    tr->add_option("--eps-scale", lcfg.epsilon_scale);
    tr->add_flag("--pif-only", pif_only, "drop the compressibility term");
    tr->add_option("--rho", rho, "SSDU loss fraction");
    tr->add_option("--beta", ei_cfg.beta, "EI equivariance weight");
    tr->add_option("--unrolls", mcfg.unrolls);
    tr->add_option("--blocks", mcfg.blocks);
    tr->add_option("--channels", mcfg.channels);
    tr->add_option("--mu", mcfg.mu);
    tr->add_flag("--train-mu", train_mu, "make mu trainable");
    tr->add_flag("--paper-scale", paper_scale, "use the full-scale architecture preset");

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "PSNR/SSIM report against the dataset truth");
    add_config_opt(ev);
    std::string ev_ds, ev_out = "metrics";
    std::vector<std::string> ev_recons;
    ev->add_option("--dataset", ev_ds)->required();
    ev->add_option("--recon", ev_recons, "reconstruction image file(s)")->required();
    ev->add_option("--out", ev_out, "output prefix for CSV/JSON");

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate", "zero-shot sweeps over lambda, K, or R/pattern");
    add_config_opt(ab);
    std::string ab_sweep = "lambda", ab_out = "ablation";
    int ab_seeds = 5, ab_epochs = 60, ab_threads = 1;
    uint64_t ab_seed0 = default_seed();
    std::vector<std::string> ab_lambdas = {"0", "50", "100", "200", "inf"};
    std::vector<int> ab_ks = {1, 3, 6, 10};
    std::vector<int> ab_rs = {4, 6, 8};
    std::vector<std::string> ab_patterns = {"equidistant", "random"};
    ab->add_option("--sweep", ab_sweep)->check(CLI::IsMember({"lambda", "k", "r"}));
    ab->add_option("--out", ab_out, "output directory");
    ab->add_option("--seeds", ab_seeds, "instances per sweep point");
    ab->add_option("--epochs", ab_epochs);
    ab->add_option("--seed", ab_seed0, "base instance seed");
    ab->add_option("--threads", ab_threads, "parallel sweep workers");
    ab->add_option("--lambdas", ab_lambdas);
    ab->add_option("--ks", ab_ks);
    ab->add_option("--rs", ab_rs);
    ab->add_option("--patterns", ab_patterns);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e); // prints help or the usage problem
        return rc == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
        icfg.kind = mask_kind_from_string(gen_kind == "random" ? "random-uniform" : gen_kind);
        for (int i = 0; i < gen_count; ++i) {
            InstanceConfig one = icfg;
            one.seed = icfg.seed + uint64_t(i);
            DatasetFile d = build_dataset(one, pad_lines);
            std::string path = gen_out;
            if (gen_count > 1) {
                char suffix[32];
                std::snprintf(suffix, sizeof(suffix), "_%03d.cpid", i);
                path = gen_out + suffix;
            }
            write_dataset(path, d);
            std::cout << "wrote " << path << " (R_eff " << d.mask.r_effective() << ", "
                      << d.mask.sampled_line_count() << " lines)\n";
        }
        return 0;
    }

    if (rec->parsed()) {
        DatasetFile d = read_dataset(rec_ds);
        CoilSensitivities coils = dataset_coils(d);
        KSpaceData y = dataset_y(d);
        EncodingOperator enc(coils, d.mask);
        ComplexImage out;
        if (rec_method == "cgsense") {
            out = cg_sense(y, enc, rec_cg);
        } else if (rec_method == "input") {
            out = dataset_x_pi(d); // the stored parallel-imaging image
        } else if (rec_method == "reference") {
            out = dataset_x_true(d); // ground-truth export for comparisons
        } else if (rec_method == "grappa") {
            GrappaKernel kern = grappa_calibrate(y);
            out = grappa_combine(grappa_reconstruct(y, kern), coils);
        } else if (rec_method == "cs") {
            out = cs_reconstruct(y, enc, dataset_x_pi(d), rec_cs);
        } else {
            if (rec_ckpt.empty()) throw DataError("recon model needs --ckpt");
            UnrolledModel model = UnrolledModel::load(rec_ckpt);
            ComplexImage x_pi = dataset_x_pi(d);
            const double scale = std::max(max_abs(x_pi), 1e-300);
            auto enc_ptr = std::make_shared<const EncodingOperator>(coils, d.mask);
            out = Complex(scale, 0) * model.apply(Complex(1.0 / scale, 0) * x_pi, enc_ptr);
        }
        write_views(rec_out, out, rec_png);
        std::cout << "wrote " << rec_out << ".cpimg/.pgm" << (rec_png ? "/.png" : "") << "\n";
        return 0;
    }

    if (tr->parsed()) {
        std::vector<std::string> files;
        for (const auto& path : tr_datasets) {
            if (fs::is_directory(path)) {
                for (const auto& e : fs::directory_iterator(path))
                    if (e.path().extension() == ".cpid") files.push_back(e.path().string());
                std::sort(files.begin(), files.end());
            } else {
                files.push_back(path);
            }
        }
        if (files.empty()) throw DataError("train: no dataset files found");
        tcfg.mode = tr_mode == "zeroshot" ? TrainMode::ZeroShot : TrainMode::Database;
        if (tcfg.mode == TrainMode::ZeroShot && files.size() != 1)
            throw DataError("zero-shot training takes exactly one dataset");
        tcfg.run_dir = tr_run;
        if (paper_scale) {
            const ModelConfig p = ModelConfig::paper_scale();
            mcfg.unrolls = p.unrolls;
            mcfg.blocks = p.blocks;
            mcfg.channels = p.channels;
        }
        mcfg.train_mu = train_mu;
        lcfg.pif_only = pif_only;

        const LossKind kind = loss_kind_from_string(tr_loss);
        std::vector<TrainSample> samples;
        for (size_t i = 0; i < files.size(); ++i) {
            DatasetFile d = read_dataset(files[i]);
            CoilSensitivities coils = dataset_coils(d);
            auto enc = std::make_shared<const EncodingOperator>(coils, d.mask);
            ComplexImage x_pi = dataset_x_pi(d);
            ComplexImage x_true = dataset_x_true(d);
            KSpaceData y = dataset_y(d);
            if (kind == LossKind::Cupid) {
                samples.push_back(make_cupid_sample(x_pi, enc, lcfg, tcfg.seed + 404 + i, &x_true));
                continue;
            }
            TrainSample s;
            s.scale = std::max(max_abs(x_pi), 1e-300);
            s.x_pi = Complex(1.0 / s.scale, 0) * x_pi;
            s.enc = enc;
            s.x_true = x_true;
            s.has_truth = true;
            if (kind == LossKind::Supervised) {
                SamplingMask full = make_mask(int(d.h), 1, 0, MaskKind::Equidistant, 0);
                s.enc_full = std::make_shared<const EncodingOperator>(coils, full);
                s.y_ref = s.enc_full->apply(Complex(1.0 / s.scale, 0) * x_true);
            } else if (kind == LossKind::Ssdu) {
                auto [theta, lam] = ssdu_split(d.mask, rho, tcfg.seed + 17 + i);
                auto enc_theta = std::make_shared<const EncodingOperator>(coils, theta);
                s.enc_lambda = std::make_shared<const EncodingOperator>(coils, lam);
                KSpaceData y_theta = restrict_to_mask(y, theta);
                ComplexImage x_in = cg_sense(y_theta, *enc_theta);
                s.scale = std::max(max_abs(x_in), 1e-300);
                s.x_pi = Complex(1.0 / s.scale, 0) * x_in;
                s.enc = enc_theta;
                s.y_lambda = restrict_to_mask(y, lam);
                for (auto& coil : s.y_lambda.coils)
                    for (auto& z : coil.v) z /= s.scale;
            } else { // EI
                s.y = y;
                for (auto& coil : s.y.coils)
                    for (auto& z : coil.v) z /= s.scale;
            }
            samples.push_back(std::move(s));
        }
        UnrolledModel model(mcfg, tcfg.seed + 505);
        TrainResult res = train(model, samples, kind, tcfg, lcfg, ei_cfg);
        std::cout << "trained " << tr_loss << " for " << tcfg.epochs << " epochs; run dir "
                  << tr_run << "\n";
        if (!res.curve.empty()) {
            const EpochLog& last = res.curve.back();
            std::cout << "final loss " << last.total;
            if (std::isfinite(last.psnr_db))
                std::cout << ", psnr " << last.psnr_db << " dB, ssim " << last.ssim_val;
            std::cout << "\n";
        }
        return 0;
    }

    if (ev->parsed()) {
        DatasetFile d = read_dataset(ev_ds);
        ComplexImage truth = dataset_x_true(d);
        MetricReport rep;
        for (const auto& rpath : ev_recons) {
            ComplexImage rec_img = read_image_file(rpath);
            if (rec_img.h != truth.h || rec_img.w != truth.w)
                throw DataError("eval: reconstruction shape does not match dataset");
            rep.slices.push_back({psnr(truth, rec_img), ssim(truth, rec_img)});
        }
        std::ofstream csv(ev_out + ".csv");
        csv << metric_report_csv(rep);
        std::ofstream js(ev_out + ".json");
        js << metric_report_json(rep).dump(2) << "\n";
        std::cout << metric_report_csv(rep);
        return 0;
    }

    if (ab->parsed()) {
        fs::create_directories(ab_out);
        std::vector<std::function<SweepRow()>> jobs;
        auto zero_shot_job = [ab_epochs](InstanceConfig icfg2, CupidLossConfig lcfg2,
                                         std::string sweep, std::string point) {
            return [=]() {
                const auto t0 = std::chrono::steady_clock::now();
                Instance inst = make_instance(icfg2);
                TrainConfig tc;
                tc.epochs = ab_epochs;
                ZeroShotOutcome out = run_zero_shot_cupid(inst, ModelConfig::toy(), lcfg2, tc);
                const double secs =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
                return SweepRow{sweep,         point,        icfg2.seed, out.psnr_input,
                                out.psnr_out,  out.ssim_out, secs};
            };
        };
        for (int s = 0; s < ab_seeds; ++s) {
            InstanceConfig base;
            base.seed = ab_seed0 + uint64_t(s);
            if (ab_sweep == "lambda") {
                for (const auto& ls : ab_lambdas) {
                    CupidLossConfig l;
                    if (ls == "inf")
                        l.pif_only = true;
                    else
                        l.lambda = std::stod(ls);
                    jobs.push_back(zero_shot_job(base, l, "lambda", ls));
                }
            } else if (ab_sweep == "k") {
                for (int k : ab_ks) {
                    CupidLossConfig l;
                    l.k = k;
                    jobs.push_back(zero_shot_job(base, l, "k", std::to_string(k)));
                }
            } else {
                for (int r : ab_rs) {
                    for (const auto& pat : ab_patterns) {
                        InstanceConfig ic = base;
                        ic.r = r;
                        ic.kind = mask_kind_from_string(pat == "random" ? "random-uniform" : pat);
                        CupidLossConfig l;
                        jobs.push_back(zero_shot_job(ic, l, "r", std::to_string(r) + "/" + pat));
                    }
                }
            }
        }
        std::vector<SweepRow> rows;
        run_sweep_points(jobs, std::max(1, ab_threads), rows);

        std::ofstream csv(fs::path(ab_out) / "summary.csv");
        csv << "sweep,point,seed,psnr_input,psnr_output,ssim_output,seconds\n";
        for (const auto& r : rows) {
            char buf[200];
            std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%.4f,%.4f,%.5f,%.2f\n", r.sweep.c_str(),
                          r.point.c_str(), (unsigned long long)r.seed, r.psnr_in, r.psnr_out,
                          r.ssim_out, r.seconds);
            csv << buf;
        }
        std::map<std::string, std::pair<double, int>> agg;
        for (const auto& r : rows) {
            agg[r.point].first += r.psnr_out;
            agg[r.point].second += 1;
        }
        std::cout << "point  mean_psnr_out\n";
        for (const auto& [point, acc] : agg)
            std::cout << point << "  " << acc.first / acc.second << "\n";
        std::cout << "summary written to " << (fs::path(ab_out) / "summary.csv").string() << "\n";
        return 0;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
}
