#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <Eigen/Cholesky>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "turbsim/turbsim.hpp"

namespace ts = turbsim;

namespace {

struct Globals {
    std::uint64_t seed = 0;
    int workers = 1;
    std::string log_level = "info";
};

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

void print_kv(const std::string& k, const std::string& v) { std::cout << k << " = " << v << '\n'; }
void print_kv(const std::string& k, double v) { print_kv(k, ts::KeyValueDoc::format_double(v)); }

ts::BasisBundle load_bundle(const std::string& path) {
    auto b = ts::BasisBundle::load(path);
    spdlog::info("basis {} (K={}, s={}, D/r0 [{}, {}]); field generator {}", b.hash, b.basis->num_kernels,
                 b.basis->kernel_size, b.basis->dr0_lo, b.basis->dr0_hi, ts::kGeneratorId);
    return b;
}

ts::TurbulenceProtocol load_protocol(const std::string& path) {
    return ts::protocol_from_keyvalue(ts::KeyValueDoc::load(path));
}

double since(std::chrono::steady_clock::time_point t) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t).count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Anisoplanatic turbulence simulator"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Master seed")->capture_default_str();
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
    app.add_option("--log-level", g.log_level, "trace|debug|info|warn|error|off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}))
        ->capture_default_str();

    // build-basis
    ts::BasisConfig bcfg;
    std::string basis_out;
    auto* build = app.add_subcommand("build-basis", "Build the PCA blur-kernel basis");
    build->add_option("--out", basis_out, "Artifact path")->required();
    build->add_option("--samples", bcfg.n_samples, "Training PSFs")->capture_default_str();
    build->add_option("--kernels", bcfg.num_kernels, "Basis size K")->capture_default_str();
    build->add_option("--size", bcfg.kernel_size, "Kernel side s (odd)")->capture_default_str();
    build->add_option("--pupil-n", bcfg.pupil_n, "Pupil grid")->capture_default_str();
    build->add_option("--dr0-max", bcfg.dr0_hi, "Upper D/r0 of the training range")->capture_default_str();
    build->add_option("--pixel-scale", bcfg.pixel_scale, "Pixel angle in lambda/D")->capture_default_str();

    // fit-p2s
    ts::P2sFitConfig fcfg;
    std::string fit_basis, fit_out;
    auto* fit = app.add_subcommand("fit-p2s", "Fit the phase-to-space surrogate into a basis artifact");
    fit->add_option("--basis", fit_basis, "Basis artifact")->required()->check(CLI::ExistingFile);
    fit->add_option("--out", fit_out, "Output artifact (default: overwrite --basis)");
    fit->add_option("--train", fcfg.n_train, "Training samples")->capture_default_str();
    fit->add_option("--heldout", fcfg.n_heldout, "Held-out samples")->capture_default_str();
    fit->add_option("--ridge", fcfg.ridge, "Relative ridge weight")->capture_default_str();

    // render-psf
    std::string rp_protocol, rp_out;
    int rp_size = 33;
    bool rp_diffraction = false;
    auto* rpsf = app.add_subcommand("render-psf", "Render one exact PSF for a protocol");
    rpsf->add_option("--protocol", rp_protocol, "Protocol file")->required()->check(CLI::ExistingFile);
    rpsf->add_option("--out", rp_out, "Output image (.png is peak-normalized, otherwise raw)")->required();
    rpsf->add_option("--size", rp_size, "Kernel side (odd)")->capture_default_str();
    rpsf->add_flag("--diffraction", rp_diffraction, "Zero aberration");

    // degrade
    std::string dg_input, dg_protocol, dg_basis, dg_out, dg_sidecar;
    std::uint64_t dg_noise_seed = 0;
    bool dg_no_noise = false;
    auto* degrade = app.add_subcommand("degrade", "Degrade one image");
    degrade->add_option("--input", dg_input, "Clean image (png or raw)")->required()->check(CLI::ExistingFile);
    degrade->add_option("--protocol", dg_protocol, "Protocol file")->required()->check(CLI::ExistingFile);
    degrade->add_option("--basis", dg_basis, "Basis artifact")->required()->check(CLI::ExistingFile);
    degrade->add_option("--out", dg_out, "Degraded image (png or raw)")->required();
    degrade->add_option("--sidecar", dg_sidecar, "Write a replay sidecar");
    auto* dg_ns = degrade->add_option("--noise-seed", dg_noise_seed, "Noise seed (default derived from --seed)");
    degrade->add_flag("--no-noise", dg_no_noise, "Skip additive noise");

    // gen-dataset
    ts::DatasetConfig dcfg;
    std::string gd_table = "default", gd_basis;
    int gd_size = 256;
    bool gd_no_png = false;
    auto* gen = app.add_subcommand("gen-dataset", "Generate a degraded dataset with sidecars");
    gen->add_option("--src", dcfg.src_dir, "Directory of clean images")->required();
    gen->add_option("--out", dcfg.out_dir, "Output directory")->required();
    gen->add_option("--n", dcfg.n_samples, "Number of samples")->required();
    gen->add_option("--table", gd_table, "Protocol table file or 'default'")->capture_default_str();
    gen->add_option("--basis", gd_basis, "Basis artifact")->required()->check(CLI::ExistingFile);
    gen->add_option("--size", gd_size, "Square raster (center crop)")->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--noise-sigma", dcfg.defaults.noise_sigma, "Additive noise std")->capture_default_str();
    gen->add_option("--wavelength", dcfg.defaults.wavelength_m, "Wavelength (m)")->capture_default_str();
    gen->add_flag("--no-png", gd_no_png, "Only write raw planes");

    // reproduce
    std::string rep_sidecar, rep_clean, rep_basis, rep_out, rep_check;
    auto* reproduce = app.add_subcommand("reproduce", "Replay a sidecar on its clean image");
    reproduce->add_option("--sidecar", rep_sidecar, "Sidecar file")->required()->check(CLI::ExistingFile);
    reproduce->add_option("--clean", rep_clean, "Clean image")->required()->check(CLI::ExistingFile);
    reproduce->add_option("--basis", rep_basis, "Basis artifact")->required()->check(CLI::ExistingFile);
    reproduce->add_option("--out", rep_out, "Write the replayed image");
    reproduce->add_option("--check", rep_check, "Stored degraded raw planes to compare bytewise");

    // invert
    ts::InverseConfig icfg;
    std::string inv_observed, inv_sidecar, inv_basis, inv_clean, inv_out, inv_trace;
    auto* inv = app.add_subcommand("invert", "Recover an image through the simulator");
    inv->add_option("--observed", inv_observed, "Degraded image")->required()->check(CLI::ExistingFile);
    inv->add_option("--sidecar", inv_sidecar, "Sidecar of the observation")->required()->check(CLI::ExistingFile);
    inv->add_option("--basis", inv_basis, "Basis artifact")->required()->check(CLI::ExistingFile);
    inv->add_option("--clean", inv_clean, "Ground truth, for PSNR reporting")->check(CLI::ExistingFile);
    inv->add_option("--out", inv_out, "Recovered image");
    inv->add_option("--trace", inv_trace, "Objective trace file (default stdout)");
    inv->add_option("--iters", icfg.max_iters, "Iterations")->capture_default_str();
    inv->add_option("--step", icfg.step_size, "Initial step")->capture_default_str();
    inv->add_option("--tau", icfg.tv_weight, "TV weight")->capture_default_str();
    inv->add_option("--huber-delta", icfg.huber_delta, "Huber width")->capture_default_str();
    inv->add_option("--stop-tol", icfg.stop_tol, "Relative decrease to stop at")->capture_default_str();

    // classify
    std::string cl_protocol;
    ts::StrengthThresholds th;
    auto* classify = app.add_subcommand("classify", "Turbulence strength label of a protocol");
    classify->add_option("--protocol", cl_protocol, "Protocol file")->required()->check(CLI::ExistingFile);
    classify->add_option("--weak-max", th.weak_max, "Upper D/r0 of weak")->capture_default_str();
    classify->add_option("--medium-max", th.medium_max, "Upper D/r0 of medium")->capture_default_str();

    // validate-field
    std::string vf_protocol;
    int vf_samples = 2000;
    auto* vfield = app.add_subcommand("validate-field", "Monte-Carlo statistics of the Zernike field");
    vfield->add_option("--protocol", vf_protocol, "Protocol file")->required()->check(CLI::ExistingFile);
    vfield->add_option("--samples", vf_samples, "Number of fields")->capture_default_str();

    // metrics
    std::string m_a, m_b;
    double m_peak = 1.0;
    auto* metrics = app.add_subcommand("metrics", "PSNR and SSIM between two images");
    metrics->add_option("--a", m_a, "First image")->required()->check(CLI::ExistingFile);
    metrics->add_option("--b", m_b, "Second image")->required()->check(CLI::ExistingFile);
    metrics->add_option("--peak", m_peak, "Peak intensity")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error kind=usage message=" << one_line(e.what()) << std::endl;
        return 2;
    }

    auto logger = spdlog::stderr_color_mt("turbsim");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::from_str(g.log_level));

    try {
        if (build->parsed()) {
            bcfg.seed = g.seed;
            bcfg.workers = g.workers;
            const auto t = std::chrono::steady_clock::now();
            ts::PsfArtifact art{ts::build_psf_basis(bcfg), std::nullopt};
            ts::save_psf_artifact(basis_out, art);
            double captured = 0.0;
            for (double f : art.basis.variance_fraction) captured += f;
            spdlog::info("basis built in {:.1f} s", since(t));
            print_kv("basis_hash", ts::artifact_hash(art));
            print_kv("kernels", std::to_string(art.basis.num_kernels));
            print_kv("captured_fraction", captured);
        } else if (fit->parsed()) {
            auto art = ts::load_psf_artifact(fit_basis);
            fcfg.seed = g.seed + 1;
            fcfg.workers = g.workers;
            fcfg.dr0_lo = art.basis.dr0_lo;
            fcfg.dr0_hi = art.basis.dr0_hi;
            art.map = ts::fit_p2s_surrogate(art.basis, fcfg);
            ts::save_psf_artifact(fit_out.empty() ? fit_basis : fit_out, art);
            print_kv("basis_hash", ts::artifact_hash(art));
            print_kv("heldout_median_error", art.map->heldout_median_error);
        } else if (rpsf->parsed()) {
            const auto p = load_protocol(rp_protocol);
            std::vector<double> a(ts::kNumHighOrder, 0.0);
            const double dr0 = ts::d_over_r0(p);
            if (!rp_diffraction && dr0 > 0.0) {
                const auto cov = ts::noll_covariance(dr0);
                const Eigen::MatrixXd sub = cov.matrix.block(ts::kFirstHighOrder - 1, ts::kFirstHighOrder - 1,
                                                             ts::kNumHighOrder, ts::kNumHighOrder);
                const Eigen::MatrixXd l = Eigen::LLT<Eigen::MatrixXd>(sub).matrixL();
                Eigen::VectorXd z(ts::kNumHighOrder);
                for (int i = 0; i < ts::kNumHighOrder; ++i) z[i] = ts::counter_normal(g.seed, 0, i);
                const Eigen::VectorXd v = l * z;
                for (int i = 0; i < ts::kNumHighOrder; ++i) a[i] = v[i];
            }
            const auto k = ts::render_psf_exact({}, a, p, rp_size);
            ts::ImageBuffer img(k.size, k.size, 1);
            img.data = k.data;
            double peak = 0.0;
            for (double v : k.data) peak = std::max(peak, v);
            if (rp_out.size() >= 4 && rp_out.substr(rp_out.size() - 4) == ".png")
                for (double& v : img.data) v /= peak;
            ts::write_image(rp_out, img);
            print_kv("d_over_r0", dr0);
            print_kv("pixel_scale_lambda_over_d", p.pixel_scale_lambda_over_d());
            print_kv("kernel_sum", k.sum());
            print_kv("peak", peak);
        } else if (degrade->parsed()) {
            const auto bundle = load_bundle(dg_basis);
            auto p = load_protocol(dg_protocol);
            const auto clean =
                ts::round_to_f32(ts::center_crop(ts::read_image(dg_input), p.image_height_px, p.image_width_px));
            ts::SampleSidecar sc;
            sc.protocol = p;
            sc.field_seed = {g.seed, std::string(ts::kGeneratorId)};
            sc.noise_seed = dg_ns->count() ? dg_noise_seed : ts::derive_seed(g.seed, 0, ts::kPurposeNoise);
            sc.basis_hash = bundle.hash;
            sc.label = ts::classify_strength(p);
            sc.source = dg_input;
            if (dg_no_noise) sc.protocol.noise_sigma = 0.0;
            const auto out = ts::reproduce_sample(sc, clean, bundle, g.workers);
            ts::write_image(dg_out, out);
            if (!dg_sidecar.empty()) ts::save_sidecar(dg_sidecar, sc);
            print_kv("d_over_r0", sc.label.d_over_r0);
            print_kv("strength", ts::strength_name(sc.label.level));
            print_kv("noise_seed", std::to_string(sc.noise_seed));
        } else if (gen->parsed()) {
            const auto bundle = load_bundle(gd_basis);
            if (gd_table != "default") dcfg.table = ts::table_from_keyvalue(ts::KeyValueDoc::load(gd_table));
            dcfg.master_seed = g.seed;
            dcfg.workers = g.workers;
            dcfg.defaults.height = dcfg.defaults.width = gd_size;
            dcfg.write_png = !gd_no_png;
            const auto t = std::chrono::steady_clock::now();
            const auto entries = ts::generate_dataset(dcfg, bundle);
            std::array<int, 3> counts{};
            for (const auto& e : entries) ++counts[static_cast<int>(e.label)];
            print_kv("samples", std::to_string(entries.size()));
            print_kv("weak", std::to_string(counts[0]));
            print_kv("medium", std::to_string(counts[1]));
            print_kv("strong", std::to_string(counts[2]));
            print_kv("seconds", since(t));
        } else if (reproduce->parsed()) {
            const auto bundle = load_bundle(rep_basis);
            const auto sc = ts::load_sidecar(rep_sidecar);
            const auto out = ts::reproduce_sample(sc, ts::read_image(rep_clean), bundle, g.workers);
            if (!rep_out.empty()) ts::write_image(rep_out, out);
            if (!rep_check.empty()) {
                const bool same = ts::encode_raw(out) == ts::read_file_bytes(rep_check);
                print_kv("bit_exact", same ? "true" : "false");
                if (!same) {
                    std::cerr << "error kind=replay message=replayed image differs from " << rep_check << std::endl;
                    return 1;
                }
            }
        } else if (inv->parsed()) {
            const auto bundle = load_bundle(inv_basis);
            const auto sc = ts::load_sidecar(inv_sidecar);
            const auto observed = ts::read_image(inv_observed);
            const auto r = ts::realize_from_sidecar(sc, bundle, g.workers);
            icfg.workers = g.workers;
            const auto t = std::chrono::steady_clock::now();
            const auto res = ts::invert(observed, r, icfg, observed);
            std::ofstream trace_file;
            if (!inv_trace.empty()) {
                trace_file.open(inv_trace);
                ts::require(static_cast<bool>(trace_file), ts::ErrorKind::io, "cannot write " + inv_trace);
            }
            std::ostream& tout = inv_trace.empty() ? std::cout : trace_file;
            for (double v : res.trace) tout << ts::KeyValueDoc::format_double(v) << '\n';
            if (!inv_out.empty()) ts::write_image(inv_out, res.image);
            spdlog::info("invert: {} iterations in {:.2f} s, objective {} -> {}", res.iterations, since(t),
                         res.trace.front(), res.trace.back());
            if (!inv_clean.empty()) {
                const auto clean = ts::read_image(inv_clean);
                spdlog::info("psnr observed {:.3f} dB, recovered {:.3f} dB", ts::psnr(observed, clean),
                             ts::psnr(res.image, clean));
            }
        } else if (classify->parsed()) {
            const auto label = ts::classify_strength(load_protocol(cl_protocol), th);
            print_kv("strength", ts::strength_name(label.level));
            print_kv("d_over_r0", label.d_over_r0);
        } else if (vfield->parsed()) {
            const auto p = load_protocol(vf_protocol);
            spdlog::info("field generator {}", ts::kGeneratorId);
            const auto v = ts::validate_field(p, vf_samples, g.seed, g.workers);
            print_kv("samples", std::to_string(vf_samples));
            print_kv("d_over_r0", ts::d_over_r0(p));
            print_kv("covariance_rel_frobenius", v.covariance_rel_frobenius);
            print_kv("tilt_variance_expected", v.expected(2, 2));
            print_kv("tilt_variance_x", v.tilt_variance_x);
            print_kv("tilt_variance_y", v.tilt_variance_y);
            print_kv("ho_corr_len_px", v.ho_corr_len_px);
            print_kv("autocorr_max_lag", std::to_string(v.autocorr_max_lag));
            print_kv("autocorr_max_abs_error", v.autocorr_max_abs_error);
            print_kv("quadrant_variance_drift", v.report.max_variance_drift);
        } else if (metrics->parsed()) {
            const auto a = ts::read_image(m_a);
            const auto b = ts::read_image(m_b);
            const double p = ts::psnr(a, b, m_peak);
            print_kv("psnr_db", std::isinf(p) ? std::string("inf") : ts::KeyValueDoc::format_double(p));
            ts::SsimOptions so;
            so.data_range = m_peak;
            print_kv("ssim", ts::ssim(a, b, so));
        }
    } catch (const ts::Error& e) {
        std::cerr << "error kind=" << ts::kind_name(e.kind()) << " message=" << one_line(e.what()) << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error kind=internal message=" << one_line(e.what()) << std::endl;
        return 1;
    }
    return 0;
}
