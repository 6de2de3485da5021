#include "digfuse/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "digfuse/errors.hpp"
#include "digfuse/external_denoiser.hpp"
#include "digfuse/fusion.hpp"
#include "digfuse/image_io.hpp"
#include "digfuse/metrics.hpp"
#include "digfuse/run_config.hpp"
#include "digfuse/theory.hpp"

namespace fs = std::filesystem;

namespace digfuse {

namespace {

// Maps thrown errors to the documented process exit codes. CLI11 parse
// errors count as config errors.
int run_guarded(CLI::App& app, const std::vector<std::string>& args,
                const std::function<int()>& body) {
    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }
    try {
        return body();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const InputError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}

// Shared flags; flag values override config-file values when present.
struct Flags {
    std::string config, ir, vis, out, distance, grid, wmode, oracle;
    std::vector<std::string> inputs;
    int steps = 0, interval = 0, bands = 0;
    double gscale = 0.0;
    uint64_t seed = 0;
    CLI::Option *o_config = nullptr, *o_ir = nullptr, *o_vis = nullptr, *o_out = nullptr,
                *o_inputs = nullptr, *o_steps = nullptr, *o_interval = nullptr,
                *o_distance = nullptr, *o_grid = nullptr, *o_wmode = nullptr,
                *o_gscale = nullptr, *o_seed = nullptr, *o_bands = nullptr,
                *o_oracle = nullptr;

    void attach(CLI::App& app) {
        o_config = app.add_option("--config", config, "config file (key = value lines)");
        o_ir = app.add_option("--ir", ir, "infrared/base modality image");
        o_vis = app.add_option("--vis", vis, "visible/detail modality image");
        o_inputs = app.add_option("--inputs", inputs, "modality images, in weight order")
                       ->delimiter(',');
        o_out = app.add_option("--out", out, "output directory");
        o_steps = app.add_option("--steps", steps, "reverse steps N");
        o_interval = app.add_option("--dig-interval", interval, "gain interval S");
        o_distance = app.add_option("--dig-distance", distance, "gain distance: l1|l2|ssim");
        o_grid = app.add_option("--patch-grid", grid, "gain grid RxC or 'global'");
        o_wmode = app.add_option("--weight-mode", wmode,
                                 "dynamic | static-equal | static-fixed=w1,w2,...");
        o_gscale = app.add_option("--guidance-scale", gscale, "guidance strength");
        o_seed = app.add_option("--seed", seed, "run seed");
        o_bands = app.add_option("--seeds-for-bands", bands,
                                 "seed count for trace mean/variance bands");
        o_oracle = app.add_option("--oracle", oracle,
                                  "gaussian | empirical | external:DIR");
        o_inputs->excludes(o_ir);
        o_inputs->excludes(o_vis);
        o_ir->needs(o_vis);
        o_vis->needs(o_ir);
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (o_config->count()) cfg = load_config_file(config);
        if (o_inputs->count()) cfg.inputs = inputs;
        if (o_ir->count()) cfg.inputs = {ir, vis};
        if (o_out->count()) cfg.out_dir = out;
        if (o_steps->count()) cfg.steps = steps;
        if (o_interval->count()) cfg.dig_interval = interval;
        if (o_distance->count()) cfg.dig_distance = distance;
        if (o_grid->count()) cfg.patch_grid = grid;
        if (o_wmode->count()) cfg.weight_mode = wmode;
        if (o_gscale->count()) cfg.guidance_scale = gscale;
        if (o_seed->count()) cfg.seed = seed;
        if (o_bands->count()) cfg.seeds_for_bands = bands;
        if (o_oracle->count()) cfg.oracle = oracle;
        return cfg;
    }
};

// Modality names come from file stems; falls back to indexed names when
// stems collide so the trace stays unambiguous.
ModalityStack load_stack(const std::vector<std::string>& paths) {
    ModalityStack ms;
    for (const std::string& p : paths) {
        ms.images.push_back(load_image(p));
        ms.names.push_back(fs::path(p).stem().string());
    }
    std::vector<std::string> sorted = ms.names;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        for (size_t k = 0; k < ms.names.size(); ++k)
            ms.names[k] = "m" + std::to_string(k + 1) + "_" + ms.names[k];
    for (size_t k = 1; k < ms.images.size(); ++k)
        if (!ms.images[k].same_shape(ms.images[0]))
            throw InputError("input images disagree in shape: " + paths[0] + " vs " +
                             paths[k]);
    ms.validate();
    return ms;
}

std::unique_ptr<Denoiser> build_oracle(const RunConfig& cfg, const ModalityStack& ms,
                                       const NoiseSchedule& s) {
    if (cfg.oracle == "gaussian") {
        const ImageTensor& ref = ms.images.front();
        ImageTensor mu(ref.h, ref.w, ref.c, cfg.oracle_mu);
        return std::make_unique<GaussianDataOracle>(mu, cfg.oracle_var, s);
    }
    if (cfg.oracle == "empirical") {
        std::vector<ImageTensor> atoms;
        if (!cfg.oracle_atoms.empty()) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(cfg.oracle_atoms)) {
                std::string ext = e.path().extension().string();
                if (ext == ".png" || ext == ".pgm" || ext == ".ppm")
                    files.push_back(e.path());
            }
            if (files.empty())
                throw InputError("no atom images found in " + cfg.oracle_atoms);
            std::sort(files.begin(), files.end());
            for (const auto& f : files) atoms.push_back(load_image(f));
        } else {
            atoms = ms.images;  // the modalities themselves as the prior
        }
        return std::make_unique<EmpiricalDataOracle>(std::move(atoms), s);
    }
    const std::string prefix = "external:";
    if (cfg.oracle.rfind(prefix, 0) == 0)
        return std::make_unique<ExternalDenoiser>(cfg.oracle.substr(prefix.size()),
                                                  cfg.external_timeout_ms);
    throw ConfigError("oracle must be gaussian, empirical or external:DIR, got '" +
                      cfg.oracle + "'");
}

ImageTensor to_display(const ImageTensor& img) {
    ImageTensor out = img;
    for (double& v : out.data) v = model_to_display(v, 8);
    out.workspace = false;
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw InputError("cannot write " + path.string());
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                     t0)
        .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// fuse

int cmd_fuse(const std::vector<std::string>& args) {
    CLI::App app{"fuse modality images with gain-weighted guided diffusion"};
    app.name("fuse");
    Flags fl;
    fl.attach(app);
    bool emit_metrics = false;
    app.add_flag("--emit-metrics", emit_metrics, "also write report.csv vs the sources");

    return run_guarded(app, args, [&]() {
        auto t0 = std::chrono::steady_clock::now();
        RunConfig cfg = fl.resolve();
        if (emit_metrics) cfg.emit_metrics = true;
        if (cfg.inputs.empty())
            throw ConfigError("fuse needs input images (--inputs or --ir/--vis)");
        if (cfg.out_dir.empty()) throw ConfigError("fuse needs an output directory (--out)");
        cfg.validate();

        ModalityStack ms = load_stack(cfg.inputs);
        NoiseSchedule s = cfg.schedule();
        std::unique_ptr<Denoiser> den = build_oracle(cfg, ms, s);
        FuseResult r = fuse(ms, *den, s, cfg.fusion_config());

        fs::path out(cfg.out_dir);
        fs::create_directories(out);
        save_image(out / "fused.png", r.image, 8);
        std::ofstream trace(out / "trace.csv", std::ios::binary);
        r.trace.to_csv(trace);
        if (!trace) throw InputError("cannot write " + (out / "trace.csv").string());
        trace.close();
        write_text(out / "config.txt", echo_config(cfg));

        std::vector<fs::path> outputs = {out / "fused.png", out / "trace.csv",
                                         out / "config.txt"};
        if (cfg.emit_metrics) {
            MetricReport rep = fusion_report(to_display(r.image), [&] {
                ModalityStack disp = ms;
                for (ImageTensor& im : disp.images) im = to_display(im);
                return disp;
            }());
            std::ofstream repf(out / "report.csv", std::ios::binary);
            rep.to_csv(repf);
            if (!repf) throw InputError("cannot write " + (out / "report.csv").string());
            repf.close();
            outputs.push_back(out / "report.csv");
        }
        write_manifest(out, cfg, [&] {
            std::vector<std::string> full = {"fuse"};
            full.insert(full.end(), args.begin(), args.end());
            return full;
        }(), outputs, ms_since(t0));
        std::cout << "fused " << ms.K() << " modalities -> " << (out / "fused.png").string()
                  << " (" << r.trace.records << " weight records)\n";
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// dig-trace

int cmd_dig_trace(const std::vector<std::string>& args) {
    CLI::App app{"cumulative information-gain curves with seed bands"};
    app.name("dig-trace");
    Flags fl;
    fl.attach(app);

    return run_guarded(app, args, [&]() {
        auto t0 = std::chrono::steady_clock::now();
        RunConfig cfg = fl.resolve();
        if (cfg.out_dir.empty())
            throw ConfigError("dig-trace needs an output directory (--out)");
        cfg.validate();

        // With no inputs, fall back to the synthetic complementary-mask pair
        // so the command is usable without data.
        ModalityStack ms;
        if (cfg.inputs.empty()) {
            TheoryInstance inst =
                make_instance(InstanceKind::MaskedComplement, 32, 32, cfg.seed);
            ms = std::move(inst.modalities);
        } else {
            ms = load_stack(cfg.inputs);
        }
        NoiseSchedule s = cfg.schedule();
        std::unique_ptr<Denoiser> den = build_oracle(cfg, ms, s);

        int n_seeds = cfg.seeds_for_bands;
        std::vector<DIGTrace> traces;
        traces.reserve(static_cast<size_t>(n_seeds));
        FusionConfig fc = cfg.fusion_config();
        for (int j = 0; j < n_seeds; ++j) {
            fc.seed = cfg.seed + static_cast<uint64_t>(j);
            traces.push_back(fuse(ms, *den, s, fc).trace);
        }
        size_t n_rows = traces.front().rows.size();
        for (const DIGTrace& tr : traces)
            if (tr.rows.size() != n_rows)
                throw InputError("trace layouts diverged across seeds");

        // Per row position: mean and unbiased variance across seeds.
        fs::path out(cfg.out_dir);
        fs::create_directories(out);
        std::ofstream csv(out / "digtrace.csv", std::ios::binary);
        csv << "# schema: digtrace.v1\n";
        csv << "record,t,modality,patch_row,patch_col,mean_dig,var_dig,mean_cum,var_cum,"
               "mean_weight,var_weight\n";
        int rows_per_record = static_cast<int>(n_rows) / traces.front().records;
        auto emit = [&](double v) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            csv << buf;
        };
        for (size_t i = 0; i < n_rows; ++i) {
            const TraceEntry& ref = traces.front().rows[i];
            double n = static_cast<double>(n_seeds);
            double md = 0, mc = 0, mw = 0;
            for (const DIGTrace& tr : traces) {
                md += tr.rows[i].dig;
                mc += tr.rows[i].cum_dig;
                mw += tr.rows[i].weight;
            }
            md /= n;
            mc /= n;
            mw /= n;
            double vd = 0, vc = 0, vw = 0;
            if (n_seeds > 1) {
                for (const DIGTrace& tr : traces) {
                    vd += (tr.rows[i].dig - md) * (tr.rows[i].dig - md);
                    vc += (tr.rows[i].cum_dig - mc) * (tr.rows[i].cum_dig - mc);
                    vw += (tr.rows[i].weight - mw) * (tr.rows[i].weight - mw);
                }
                vd /= (n - 1);
                vc /= (n - 1);
                vw /= (n - 1);
            }
            csv << (i / static_cast<size_t>(rows_per_record)) << ',' << ref.t << ','
                << traces.front().modality_names[static_cast<size_t>(ref.modality)] << ','
                << ref.patch_row << ',' << ref.patch_col << ',';
            emit(md);
            csv << ',';
            emit(vd);
            csv << ',';
            emit(mc);
            csv << ',';
            emit(vc);
            csv << ',';
            emit(mw);
            csv << ',';
            emit(vw);
            csv << '\n';
        }
        if (!csv) throw InputError("cannot write " + (out / "digtrace.csv").string());
        csv.close();
        write_text(out / "config.txt", echo_config(cfg));
        std::vector<fs::path> outputs = {out / "digtrace.csv", out / "config.txt"};
        write_manifest(out, cfg, [&] {
            std::vector<std::string> full = {"dig-trace"};
            full.insert(full.end(), args.begin(), args.end());
            return full;
        }(), outputs, ms_since(t0));
        std::cout << "wrote " << (out / "digtrace.csv").string() << " ("
                  << traces.front().records << " records x " << n_seeds << " seeds)\n";
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// metrics

int cmd_metrics(const std::vector<std::string>& args) {
    CLI::App app{"fusion quality metrics report"};
    app.name("metrics");
    std::string fused_path, out_dir;
    std::vector<std::string> source_paths;
    app.add_option("--fused", fused_path, "fused image")->required();
    app.add_option("--inputs", source_paths, "source modality images")
        ->required()
        ->delimiter(',');
    app.add_option("--out", out_dir, "output directory")->required();

    return run_guarded(app, args, [&]() {
        ImageTensor fused = to_display(load_image(fused_path));
        ModalityStack sources = load_stack(source_paths);
        if (!fused.same_shape(sources.images.front()))
            throw InputError("fused image shape differs from the sources");
        for (ImageTensor& im : sources.images) im = to_display(im);

        MetricReport rep = fusion_report(fused, sources);
        fs::path out(out_dir);
        fs::create_directories(out);
        std::ofstream csv(out / "report.csv", std::ios::binary);
        rep.to_csv(csv);
        if (!csv) throw InputError("cannot write " + (out / "report.csv").string());
        csv.close();
        rep.to_table(std::cout);
        return kExitOk;
    });
}

// ---------------------------------------------------------------------------
// validate-theory

int cmd_validate_theory(const std::vector<std::string>& args) {
    CLI::App app{"numerical checks of the weighting-mechanism bound"};
    app.name("validate-theory");
    std::string out_dir = "theory_out";
    MechanismBench bench;
    bool with_crossing = false;
    CrossingBench cross;
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--instances", bench.n_instances, "population size")
        ->check(CLI::Range(2, 100000));
    app.add_option("--perms", bench.perm_count, "permutation count for the rank test")
        ->check(CLI::Range(1, 1000000));
    app.add_flag("--with-crossing", with_crossing,
                 "also run the frequency-split gain-crossing bench");
    app.add_option("--crossing-seeds", cross.n_seeds, "seeds for the crossing bench")
        ->check(CLI::Range(1, 10000));

    return run_guarded(app, args, [&]() {
        MechanismResult R = run_mechanism_bench(bench);

        fs::path out(out_dir);
        fs::create_directories(out);
        {
            std::ofstream led(out / "ledger.csv", std::ios::binary);
            ledgers_to_csv(R.dyn_ledgers, "dynamic", led, true);
            ledgers_to_csv(R.static_ledgers, "static_equal", led, false);
            ledgers_to_csv(R.anti_ledgers, "anti_dig", led, false);
            if (!led) throw InputError("cannot write " + (out / "ledger.csv").string());
        }
        {
            std::ofstream cov(out / "covariance.csv", std::ios::binary);
            cov_report_to_csv(covariance_report(R.dyn_ledgers), "dynamic", cov, true);
            cov_report_to_csv(covariance_report(R.static_ledgers), "static_equal", cov,
                              false);
            cov_report_to_csv(covariance_report(R.anti_ledgers), "anti_dig", cov, false);
            if (!cov)
                throw InputError("cannot write " + (out / "covariance.csv").string());
        }
        {
            std::ofstream pol(out / "policies.csv", std::ios::binary);
            pol << "# schema: theory_policies.v1\n";
            pol << "policy,covsum,mean_gerror,diverged,wall_ms\n";
            for (const PolicyOutcome& o : R.policies) {
                char buf[128];
                std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%d,%.3f\n",
                              o.name.c_str(), o.covsum, o.mean_gerror, o.diverged,
                              o.wall_ms);
                pol << buf;
            }
            if (!pol) throw InputError("cannot write " + (out / "policies.csv").string());
        }

        bool ok_cov = R.covariance_mechanism_pass();
        bool ok_dyn = R.dynamic_beats_static();
        bool ok_anti = R.anti_dominance_pass();
        char line[256];
        std::string summary;
        summary += std::string("covariance-mechanism: ") + (ok_cov ? "PASS" : "FAIL") + "\n";
        std::snprintf(line, sizeof(line), "  spearman_rho=%.4f perm_p=%.5f policies=%zu\n",
                      R.rho, R.perm_p, R.policies.size());
        summary += line;
        summary += std::string("dynamic-vs-static: ") + (ok_dyn ? "PASS" : "FAIL") + "\n";
        std::snprintf(line, sizeof(line), "  wins=%d/%d sign_p=%.3e\n", R.dyn_wins,
                      R.n_paired, R.sign_p);
        summary += line;
        summary += std::string("anti-DIG-dominance: ") + (ok_anti ? "PASS" : "FAIL") + "\n";
        std::snprintf(line, sizeof(line),
                      "  dyn_mean=%.6f static_mean=%.6f anti_mean=%.6f\n", R.dyn_mean,
                      R.static_mean, R.anti_mean);
        summary += line;

        bool ok_cross = true;
        if (with_crossing) {
            std::vector<CrossingOutcome> outs = run_crossing_bench(cross);
            int ordered = 0;
            for (const CrossingOutcome& o : outs) ordered += o.ordered() ? 1 : 0;
            ok_cross = ordered * 10 >= static_cast<int>(outs.size()) * 9;  // >= 90%
            summary += std::string("gain-crossing-order: ") + (ok_cross ? "PASS" : "FAIL") +
                       "\n";
            std::snprintf(line, sizeof(line), "  ordered=%d/%zu\n", ordered, outs.size());
            summary += line;
        }

        write_text(out / "summary.txt", summary);
        std::cout << summary;
        return (ok_cov && ok_dyn && ok_anti && ok_cross) ? kExitOk : kExitCheckFailed;
    });
}

}  // namespace digfuse
