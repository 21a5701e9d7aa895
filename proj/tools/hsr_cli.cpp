// hsr: RGB -> hyperspectral reconstruction pipeline CLI.
//
// Every command prints a JSON summary (tool version + full effective config)
// to stdout and writes machine-readable errors to stderr. All outputs are
// deterministic for a given seed, byte for byte.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "hsr/checkpoint.hpp"
#include "hsr/classify.hpp"
#include "hsr/hypercube.hpp"
#include "hsr/metrics.hpp"
#include "hsr/models.hpp"
#include "hsr/phantom.hpp"
#include "hsr/segmentation.hpp"
#include "hsr/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace hsr;

namespace {

const std::vector<double> kDefaultBands = {520, 583, 619, 655, 700,
                                           739, 780, 837, 870, 903};

std::string fmt9(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

void emit(const json& summary) { std::printf("%s\n", summary.dump(2).c_str()); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f.write(text.data(), std::streamsize(text.size())) || !f.flush())
        throw IoFailure("cannot write " + path);
}

// .hdr path for a cube given either its .hdr or bare base path
std::string cube_raw_path(const std::string& hdr) {
    fs::path p(hdr);
    p.replace_extension(".raw");
    return p.string();
}

std::vector<fs::path> sorted_files(const std::string& dir, const std::string& ext) {
    if (!fs::is_directory(dir)) throw IoFailure("not a directory: " + dir);
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ext) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    if (out.empty()) throw IoFailure("no *" + ext + " files in " + dir);
    return out;
}

ad::Ptr<float> rgb_to_tensor(const RgbImage& img) {
    auto t = ad::tensor<float>({3, img.height, img.width});
    for (int h = 0; h < img.height; ++h)
        for (int w = 0; w < img.width; ++w)
            for (int c = 0; c < 3; ++c)
                t->v[(size_t(c) * img.height + h) * img.width + w] = img.at(h, w, c);
    return t;
}

ad::Ptr<float> cube_to_tensor(const Hypercube& cube) {
    auto t = ad::tensor<float>({cube.bands, cube.height, cube.width});
    for (int h = 0; h < cube.height; ++h)
        for (int w = 0; w < cube.width; ++w)
            for (int b = 0; b < cube.bands; ++b)
                t->v[(size_t(b) * cube.height + h) * cube.width + w] = cube.at(h, w, b);
    return t;
}

Hypercube tensor_to_cube(const ad::Ptr<float>& t, const std::vector<double>& wavelengths) {
    Hypercube c;
    c.bands = t->shape[0];
    c.height = t->shape[1];
    c.width = t->shape[2];
    c.wavelengths = wavelengths;
    c.data.resize(c.size());
    for (int h = 0; h < c.height; ++h)
        for (int w = 0; w < c.width; ++w)
            for (int b = 0; b < c.bands; ++b)
                c.at(h, w, b) = t->v[(size_t(b) * c.height + h) * c.width + w];
    auto [mn, mx] = std::minmax_element(c.data.begin(), c.data.end());
    c.value_range = {*mn, *mx};
    return c;
}

RgbImage read_rgb_any(const std::string& path) {
    if (fs::path(path).extension() == ".ppm") return read_ppm(path);
    return read_rgb_raw(path);
}

json metrics_json(const ClassMetrics& m) {
    json j;
    j["accuracy"] = m.accuracy;
    j["precision"] = m.precision_defined ? json(m.precision) : json();
    j["recall"] = m.recall_defined ? json(m.recall) : json();
    j["f1"] = m.f1_defined ? json(m.f1) : json();
    return j;
}

json base_summary(const std::string& command) {
    json j;
    j["tool"] = kToolName;
    j["version"] = kToolVersion;
    j["command"] = command;
    return j;
}

// ---------------------------------------------------------------------------
// gen-synthetic
// ---------------------------------------------------------------------------

struct GenArgs {
    std::string out;
    PhantomConfig pc;
};

void cmd_gen_synthetic(const GenArgs& a) {
    write_phantom_dataset(a.pc, a.out);
    json j = base_summary("gen-synthetic");
    json cfg;
    cfg["samples"] = a.pc.n_samples;
    cfg["height"] = a.pc.height;
    cfg["width"] = a.pc.width;
    cfg["bands"] = a.pc.bands;
    cfg["wl_min"] = a.pc.wl_min;
    cfg["wl_max"] = a.pc.wl_max;
    cfg["dead_fraction"] = a.pc.dead_fraction;
    cfg["noise_sigma"] = a.pc.noise_sigma;
    cfg["seed"] = a.pc.seed;
    j["config"] = cfg;
    j["n_dead"] = phantom_dead_count(a.pc);
    // the dataset-local artifact stays path-free so identical configs produce
    // byte-identical dataset directories wherever they are written
    write_text((fs::path(a.out) / "generate.json").string(), j.dump(2) + "\n");
    j["config"]["out"] = a.out;
    j["outputs"] = {(fs::path(a.out) / "manifest.csv").string(),
                    (fs::path(a.out) / "cubes").string(),
                    (fs::path(a.out) / "rgb").string()};
    emit(j);
}

// ---------------------------------------------------------------------------
// pseudo-rgb
// ---------------------------------------------------------------------------

void cmd_pseudo_rgb(const std::string& cube_hdr, std::string out) {
    auto cube = read_cube(cube_hdr, cube_raw_path(cube_hdr));
    if (out.empty()) {
        fs::path p(cube_hdr);
        p.replace_extension("");
        out = p.string() + "_rgb.ppm";
    }
    write_ppm(pseudo_rgb(cube), out);
    json j = base_summary("pseudo-rgb");
    j["config"] = {{"cube", cube_hdr}, {"out", out}};
    j["outputs"] = {out};
    emit(j);
}

// ---------------------------------------------------------------------------
// make-labels
// ---------------------------------------------------------------------------

struct LabelArgs {
    std::string input;  // cube .hdr or dataset directory
    std::string out;
    std::vector<double> bands = kDefaultBands;
};

void cmd_make_labels(const LabelArgs& a) {
    std::vector<std::string> outputs;
    if (fs::is_directory(a.input)) {
        std::string out_dir = a.out.empty() ? (fs::path(a.input) / "labels10").string() : a.out;
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw IoFailure("cannot create " + out_dir);
        for (const auto& hdr : sorted_files((fs::path(a.input) / "cubes").string(), ".hdr")) {
            auto cube = select_bands(read_cube(hdr.string(), cube_raw_path(hdr.string())), a.bands);
            auto base = (fs::path(out_dir) / hdr.stem()).string();
            write_cube(cube, Interleave::bil, base + ".hdr", base + ".raw");
            outputs.push_back(base + ".hdr");
        }
    } else {
        auto cube = select_bands(read_cube(a.input, cube_raw_path(a.input)), a.bands);
        std::string base = a.out;
        if (base.empty()) {
            fs::path p(a.input);
            p.replace_extension("");
            base = p.string() + "_labels";
        }
        write_cube(cube, Interleave::bil, base + ".hdr", base + ".raw");
        outputs.push_back(base + ".hdr");
    }
    json j = base_summary("make-labels");
    json bands = json::array();
    for (double b : a.bands) bands.push_back(b);
    j["config"] = {{"input", a.input}, {"out", a.out}, {"bands", bands}};
    j["n_cubes"] = outputs.size();
    j["outputs"] = outputs;
    emit(j);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string arch, data, out;
    TrainConfig tc = desk_train_config();
    double beta1 = -1;  // <0: architecture default
    int width = -1, depth = -1, levels = -1, heads = -1, ffn = -1;
    uint64_t seed = 42;
};

struct Dataset {
    std::vector<TrainSample<float>> samples;
    std::vector<std::string> ids;
    std::vector<int> labels;
    Split split;
    std::vector<double> wavelengths;
};

Dataset load_dataset(const std::string& dir) {
    Dataset d;
    auto rows = read_manifest(dir);
    if (rows.empty()) throw TooFewItems("empty manifest in " + dir);
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        auto hdr = (fs::path(dir) / "labels10" / (r.sample_id + ".hdr")).string();
        auto cube = read_cube(hdr, cube_raw_path(hdr));
        if (d.wavelengths.empty()) d.wavelengths = cube.wavelengths;
        TrainSample<float> ts;
        ts.rgb = rgb_to_tensor(read_rgb_raw((fs::path(dir) / "rgb" / (r.sample_id + ".pfr")).string()));
        ts.cube = cube_to_tensor(cube);
        d.samples.push_back(std::move(ts));
        d.ids.push_back(r.sample_id);
        d.labels.push_back(r.label);
        if (r.split == "train") d.split.train.push_back(i);
        else if (r.split == "val") d.split.val.push_back(i);
        else if (r.split == "test") d.split.test.push_back(i);
        else throw MalformedHeader("unknown split '" + r.split + "' for " + r.sample_id);
    }
    if (d.split.train.empty()) throw TooFewItems("no training samples in manifest");
    if (d.split.val.empty()) throw TooFewItems("no validation samples in manifest");
    return d;
}

void cmd_train(TrainArgs a) {
    Arch arch = arch_from_string(a.arch);
    auto d = load_dataset(a.data);

    ModelConfig mc = default_config(arch);
    mc.out_bands = int(d.wavelengths.size());
    mc.seed = a.seed;
    if (a.width >= 0) mc.base_width = a.width;
    if (a.depth >= 0) mc.depth = a.depth;
    if (a.levels >= 0) mc.levels = a.levels;
    if (a.heads >= 0) mc.heads = a.heads;
    if (a.ffn >= 0) mc.ffn_expansion = a.ffn;
    validate_config(mc);

    a.tc.beta1 = a.beta1 >= 0 ? a.beta1 : default_beta1(arch);
    a.tc.seed = a.seed;
    validate_train_config(a.tc);

    std::error_code ec;
    fs::create_directories(a.out, ec);
    if (ec) throw IoFailure("cannot create " + a.out);
    auto ckpt = (fs::path(a.out) / "checkpoint.bin").string();
    auto history = (fs::path(a.out) / "history.csv").string();

    Model<float> model(mc);
    auto result = train(model, d.samples, d.split, a.tc, ckpt);
    save_checkpoint(model, ckpt);  // best-epoch weights, bit-identical rewrite
    write_history_csv(result.history, history);

    json j = base_summary("train");
    json cfg;
    cfg["arch"] = to_string(arch);
    cfg["data"] = a.data;
    cfg["out"] = a.out;
    cfg["model"] = {{"out_bands", mc.out_bands}, {"base_width", mc.base_width},
                    {"depth", mc.depth},         {"levels", mc.levels},
                    {"heads", mc.heads},         {"ffn_expansion", mc.ffn_expansion},
                    {"seed", mc.seed}};
    cfg["epochs"] = a.tc.epochs;
    cfg["iters_per_epoch"] = a.tc.iters_per_epoch;
    cfg["lr0"] = a.tc.lr0;
    cfg["lr_gamma"] = a.tc.lr_gamma;
    cfg["beta1"] = a.tc.beta1;
    cfg["beta2"] = a.tc.beta2;
    cfg["patch"] = a.tc.patch;
    cfg["stride"] = a.tc.stride;
    cfg["seed"] = a.tc.seed;
    j["config"] = cfg;
    j["param_count"] = model.param_count();
    j["best_epoch"] = result.best_epoch;
    j["best_val_mrae"] = result.best_val;
    j["outputs"] = {ckpt, history};
    write_text((fs::path(a.out) / "train.json").string(), j.dump(2) + "\n");
    emit(j);
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

struct ReconArgs {
    std::string checkpoint, input, out;
    std::vector<double> bands = kDefaultBands;
};

void cmd_reconstruct(const ReconArgs& a) {
    auto model = load_checkpoint<float>(a.checkpoint);
    if (int(a.bands.size()) != model.config().out_bands)
        throw InvalidConfig("checkpoint predicts " + std::to_string(model.config().out_bands) +
                            " bands but " + std::to_string(a.bands.size()) + " wavelengths given");

    std::vector<fs::path> inputs;
    bool batch = fs::is_directory(a.input);
    if (batch) inputs = sorted_files(a.input, ".pfr");
    else inputs = {fs::path(a.input)};

    std::string out = a.out;
    if (out.empty()) out = batch ? a.input + "_recon" : "recon";
    if (batch) {
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) throw IoFailure("cannot create " + out);
    }

    std::vector<std::string> outputs;
    for (const auto& in : inputs) {
        auto pred = model.forward(rgb_to_tensor(read_rgb_any(in.string())));
        auto cube = tensor_to_cube(pred, a.bands);
        auto base = batch ? (fs::path(out) / in.stem()).string() : out;
        write_cube(cube, Interleave::bil, base + ".hdr", base + ".raw");
        outputs.push_back(base + ".hdr");
    }
    json j = base_summary("reconstruct");
    json bands = json::array();
    for (double b : a.bands) bands.push_back(b);
    j["config"] = {{"checkpoint", a.checkpoint}, {"input", a.input},
                   {"out", out},                 {"bands", bands}};
    j["n_images"] = outputs.size();
    j["outputs"] = outputs;
    emit(j);
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string pred, gt, out;
    double data_range = 1.0;
};

void cmd_evaluate(const EvalArgs& a) {
    EvalReport rep;
    rep.data_range = a.data_range;
    std::vector<std::string> ids;
    for (const auto& hdr : sorted_files(a.pred, ".hdr")) {
        auto gt_hdr = fs::path(a.gt) / hdr.filename();
        if (!fs::exists(gt_hdr)) throw IoFailure("no ground truth for " + hdr.filename().string());
        auto p = read_cube(hdr.string(), cube_raw_path(hdr.string()));
        auto g = read_cube(gt_hdr.string(), cube_raw_path(gt_hdr.string()));
        rep.add(p.data, g.data);
        ids.push_back(hdr.stem().string());
    }
    rep.finalize();

    json j = base_summary("evaluate");
    j["config"] = {{"pred", a.pred}, {"gt", a.gt}, {"data_range", a.data_range}};
    j["n_images"] = rep.n_images;
    j["mrae"] = rep.mean_mrae;
    j["rmse"] = rep.mean_rmse;
    j["mae"] = rep.mean_mae;
    j["psnr_db"] = rep.psnr_infinite ? json() : json(rep.mean_psnr);
    j["psnr_infinite"] = rep.psnr_infinite;
    j["data_range"] = rep.data_range;
    json per = json::array();
    for (size_t i = 0; i < rep.n_images; ++i) {
        json r;
        r["sample_id"] = ids[i];
        r["mrae"] = rep.per_image_mrae[i];
        r["rmse"] = rep.per_image_rmse[i];
        r["mae"] = rep.per_image_mae[i];
        r["psnr_db"] = std::isinf(rep.per_image_psnr[i]) ? json() : json(rep.per_image_psnr[i]);
        per.push_back(r);
    }
    j["per_image"] = per;
    if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
    emit(j);
}

// ---------------------------------------------------------------------------
// extract-spectra
// ---------------------------------------------------------------------------

struct ExtractArgs {
    std::string input, out = "spectra.csv", manifest;
    double ref_nm = 700.0, threshold = 0.02;
};

void cmd_extract_spectra(const ExtractArgs& a) {
    std::map<std::string, int> label_of;
    std::string manifest = a.manifest;
    if (manifest.empty()) {
        auto guess = fs::path(a.input).parent_path() / "manifest.csv";
        if (fs::exists(guess)) manifest = guess.string();
    }
    if (!manifest.empty())
        for (const auto& r : read_manifest(fs::path(manifest).parent_path().string()))
            label_of[r.sample_id] = r.label;

    std::vector<Spectrum> spectra;
    for (const auto& hdr : sorted_files(a.input, ".hdr")) {
        auto cube = read_cube(hdr.string(), cube_raw_path(hdr.string()));
        auto mask = largest_component(threshold_mask(normalize(cube), a.ref_nm, a.threshold));
        auto sp = mean_spectrum(cube, mask);
        sp.sample_id = hdr.stem().string();
        auto it = label_of.find(sp.sample_id);
        sp.label = it == label_of.end() ? -1 : it->second;
        spectra.push_back(std::move(sp));
    }
    write_spectra_csv(spectra, a.out);

    json j = base_summary("extract-spectra");
    j["config"] = {{"input", a.input},       {"out", a.out},
                   {"manifest", manifest},   {"ref_nm", a.ref_nm},
                   {"threshold", a.threshold}};
    j["n_spectra"] = spectra.size();
    j["outputs"] = {a.out};
    emit(j);
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

struct ClassifyArgs {
    std::string spectra, method = "rf", out;
    CvOptions opt;
    bool no_smote = false;
};

void cmd_classify(ClassifyArgs a) {
    a.opt.method = method_from_string(a.method);
    a.opt.use_smote = !a.no_smote;
    a.opt.forest.seed = a.opt.seed;
    a.opt.boost.seed = a.opt.seed;

    FeatureMatrix m;
    auto spectra = read_spectra_csv(a.spectra);
    if (spectra.empty()) throw TooFewItems("no spectra in " + a.spectra);
    m.cols = spectra.front().values.size();
    for (const auto& s : spectra) {
        if (s.label != 0 && s.label != 1)
            throw NonBinaryLabels("sample " + s.sample_id + " has label " +
                                  std::to_string(s.label) + "; classify needs 0/1 labels");
        m.x.insert(m.x.end(), s.values.begin(), s.values.end());
        m.y.push_back(s.label);
        ++m.rows;
    }

    auto rep = cross_validate(m, a.opt);

    json j = base_summary("classify");
    json cfg;
    cfg["spectra"] = a.spectra;
    cfg["method"] = rep.method;
    cfg["folds"] = a.opt.folds;
    cfg["smote"] = a.opt.use_smote;
    cfg["smote_before_cv"] = a.opt.smote_before_cv;
    cfg["smote_k"] = a.opt.smote_k;
    cfg["forest"] = {{"n_trees", a.opt.forest.n_trees},
                     {"max_depth", a.opt.forest.max_depth},
                     {"min_leaf", a.opt.forest.min_leaf}};
    cfg["boost"] = {{"n_rounds", a.opt.boost.n_rounds},
                    {"learning_rate", a.opt.boost.learning_rate},
                    {"max_depth", a.opt.boost.max_depth},
                    {"l2_lambda", a.opt.boost.l2_lambda},
                    {"gamma_min_gain", a.opt.boost.gamma_min_gain}};
    cfg["seed"] = a.opt.seed;
    j["config"] = cfg;
    j["n_samples"] = m.rows;
    j["n_features"] = m.cols;
    j["mean"] = metrics_json(rep.mean);
    json folds = json::array();
    for (const auto& f : rep.per_fold) folds.push_back(metrics_json(f));
    j["per_fold"] = folds;
    if (!a.out.empty()) write_text(a.out, j.dump(2) + "\n");
    emit(j);
}

// ---------------------------------------------------------------------------
// compare-spectra
// ---------------------------------------------------------------------------

struct CompareArgs {
    std::string pred, gt, out = "compare";
};

std::vector<double> mean_curve(const std::vector<Spectrum>& spectra) {
    std::vector<double> acc(spectra.front().values.size(), 0.0);
    for (const auto& s : spectra) {
        if (s.values.size() != acc.size())
            throw LengthMismatch("inconsistent band count in spectra table");
        for (size_t b = 0; b < acc.size(); ++b) acc[b] += s.values[b];
    }
    for (auto& v : acc) v /= double(spectra.size());
    return acc;
}

std::string svg_plot(const std::vector<double>& wl, const std::vector<double>& pred,
                     const std::vector<double>& gt) {
    const double W = 640, H = 400, ml = 60, mr = 20, mt = 20, mb = 40;
    double lo = 1e300, hi = -1e300;
    for (auto& c : {pred, gt})
        for (double v : c) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (hi <= lo) hi = lo + 1;
    auto X = [&](double nm) {
        return ml + (W - ml - mr) * (nm - wl.front()) / (wl.back() - wl.front());
    };
    auto Y = [&](double v) { return H - mb - (H - mt - mb) * (v - lo) / (hi - lo); };
    auto poly = [&](const std::vector<double>& c, const char* color) {
        std::string s = "  <polyline fill=\"none\" stroke=\"";
        s += color;
        s += "\" stroke-width=\"2\" points=\"";
        char buf[64];
        for (size_t b = 0; b < c.size(); ++b) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(wl[b]), Y(c[b]));
            s += buf;
        }
        s += "\"/>\n";
        return s;
    };
    char buf[256];
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\">\n";
    s += "  <rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "  <line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n",
                  ml, H - mb, W - mr, H - mb);
    s += buf;
    std::snprintf(buf, sizeof buf,
                  "  <line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\"/>\n",
                  ml, mt, ml, H - mb);
    s += buf;
    s += poly(gt, "#202020");
    s += poly(pred, "#c03030");
    std::snprintf(buf, sizeof buf,
                  "  <text x=\"%.2f\" y=\"%.2f\" font-size=\"14\">wavelength (nm), "
                  "%s\xE2\x80\x93%s</text>\n",
                  ml, H - 10, fmt9(wl.front()).c_str(), fmt9(wl.back()).c_str());
    s += buf;
    s += "  <text x=\"540\" y=\"40\" font-size=\"14\" fill=\"#c03030\">pred</text>\n";
    s += "  <text x=\"540\" y=\"60\" font-size=\"14\" fill=\"#202020\">gt</text>\n";
    s += "</svg>\n";
    return s;
}

void cmd_compare_spectra(const CompareArgs& a) {
    auto pred = read_spectra_csv(a.pred);
    auto gt = read_spectra_csv(a.gt);
    if (pred.empty() || gt.empty()) throw TooFewItems("empty spectra table");
    if (pred.front().wavelengths.size() != gt.front().wavelengths.size())
        throw LengthMismatch("pred and gt spectra have different band counts");
    auto wl = gt.front().wavelengths;  // gt grid labels the axis
    auto pc = mean_curve(pred), gc = mean_curve(gt);

    std::string csv = "wavelength_nm,pred_mean,gt_mean\n";
    for (size_t b = 0; b < wl.size(); ++b)
        csv += fmt9(wl[b]) + "," + fmt9(pc[b]) + "," + fmt9(gc[b]) + "\n";
    write_text(a.out + ".csv", csv);
    write_text(a.out + ".svg", svg_plot(wl, pc, gc));

    json j = base_summary("compare-spectra");
    j["config"] = {{"pred", a.pred}, {"gt", a.gt}, {"out", a.out}};
    j["n_pred"] = pred.size();
    j["n_gt"] = gt.size();
    j["outputs"] = {a.out + ".csv", a.out + ".svg"};
    emit(j);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RGB-to-hyperspectral reconstruction and classification pipeline"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* cgen = app.add_subcommand("gen-synthetic", "Generate a synthetic phantom dataset");
    cgen->set_config("--config");
    cgen->add_option("--out", gen.out, "Output dataset directory")->required();
    cgen->add_option("--samples", gen.pc.n_samples, "Number of samples");
    cgen->add_option("--height", gen.pc.height, "Image height");
    cgen->add_option("--width", gen.pc.width, "Image width");
    cgen->add_option("--bands", gen.pc.bands, "Spectral bands");
    cgen->add_option("--wl-min", gen.pc.wl_min, "First wavelength (nm)");
    cgen->add_option("--wl-max", gen.pc.wl_max, "Last wavelength (nm)");
    cgen->add_option("--dead-fraction", gen.pc.dead_fraction, "Dead-class fraction");
    cgen->add_option("--noise-sigma", gen.pc.noise_sigma, "RGB noise sigma");
    cgen->add_option("--seed", gen.pc.seed, "Generator seed");

    std::string prgb_cube, prgb_out;
    auto* cprgb = app.add_subcommand("pseudo-rgb", "Render a pseudo-RGB image from a cube");
    cprgb->set_config("--config");
    cprgb->add_option("cube", prgb_cube, "Cube header (.hdr)")->required();
    cprgb->add_option("--out", prgb_out, "Output .ppm path");
    uint64_t dummy_seed = 0;
    cprgb->add_option("--seed", dummy_seed, "Unused; accepted for uniformity");

    LabelArgs lab;
    auto* clab = app.add_subcommand("make-labels", "Select label bands from cubes");
    clab->set_config("--config");
    clab->add_option("input", lab.input, "Cube .hdr or dataset directory")->required();
    clab->add_option("--bands", lab.bands, "Wavelengths to keep (nm)")->delimiter(',');
    clab->add_option("--out", lab.out, "Output base path or directory");
    clab->add_option("--seed", dummy_seed, "Unused; accepted for uniformity");

    TrainArgs tr;
    auto* ctr = app.add_subcommand("train", "Train a reconstruction model");
    ctr->set_config("--config");
    ctr->add_option("--arch", tr.arch, "edsr|hrnet|mstpp|restormer")->required();
    ctr->add_option("--data", tr.data, "Dataset directory")->required();
    ctr->add_option("--out", tr.out, "Run output directory")->required();
    ctr->add_option("--epochs", tr.tc.epochs, "Training epochs");
    ctr->add_option("--iters", tr.tc.iters_per_epoch, "Iterations per epoch");
    ctr->add_option("--lr", tr.tc.lr0, "Initial learning rate");
    ctr->add_option("--lr-gamma", tr.tc.lr_gamma, "Per-epoch lr decay");
    ctr->add_option("--beta1", tr.beta1, "Adam beta1 (default depends on arch)");
    ctr->add_option("--beta2", tr.tc.beta2, "Adam beta2");
    ctr->add_option("--patch", tr.tc.patch, "Training patch size");
    ctr->add_option("--stride", tr.tc.stride, "Patch sampling stride");
    ctr->add_option("--model-width", tr.width, "Model base width");
    ctr->add_option("--model-depth", tr.depth, "Model depth");
    ctr->add_option("--model-levels", tr.levels, "Model pyramid levels");
    ctr->add_option("--model-heads", tr.heads, "Attention heads");
    ctr->add_option("--model-ffn", tr.ffn, "FFN expansion");
    ctr->add_option("--seed", tr.seed, "Init + sampling seed");

    ReconArgs rc;
    auto* crc = app.add_subcommand("reconstruct", "Reconstruct cubes from RGB images");
    crc->set_config("--config");
    crc->add_option("--checkpoint", rc.checkpoint, "Model checkpoint")->required();
    crc->add_option("input", rc.input, "RGB image (.pfr/.ppm) or directory of .pfr")->required();
    crc->add_option("--out", rc.out, "Output cube base or directory");
    crc->add_option("--bands", rc.bands, "Output wavelengths (nm)")->delimiter(',');
    crc->add_option("--seed", dummy_seed, "Unused; accepted for uniformity");

    EvalArgs ev;
    auto* cev = app.add_subcommand("evaluate", "Compare predicted and ground-truth cubes");
    cev->set_config("--config");
    cev->add_option("--pred", ev.pred, "Directory of predicted cubes")->required();
    cev->add_option("--gt", ev.gt, "Directory of ground-truth cubes")->required();
    cev->add_option("--data-range", ev.data_range, "PSNR data range");
    cev->add_option("--out", ev.out, "Also write the report JSON here");
    cev->add_option("--seed", dummy_seed, "Unused; accepted for uniformity");

    ExtractArgs ex;
    auto* cex = app.add_subcommand("extract-spectra", "Extract ROI mean spectra from cubes");
    cex->set_config("--config");
    cex->add_option("input", ex.input, "Directory of cubes")->required();
    cex->add_option("--out", ex.out, "Output CSV path");
    cex->add_option("--manifest", ex.manifest, "Manifest CSV providing labels");
    cex->add_option("--ref-nm", ex.ref_nm, "Mask reference wavelength");
    cex->add_option("--threshold", ex.threshold, "Mask threshold");
    cex->add_option("--seed", dummy_seed, "Unused; accepted for uniformity");

    ClassifyArgs cl;
    auto* ccl = app.add_subcommand("classify", "Cross-validated live/dead classification");
    ccl->set_config("--config");
    ccl->add_option("--spectra", cl.spectra, "Spectra CSV")->required();
    ccl->add_option("--method", cl.method, "rf|gbt");
    ccl->add_option("--folds", cl.opt.folds, "CV folds");
    ccl->add_flag("--no-smote", cl.no_smote, "Disable SMOTE oversampling");
    ccl->add_flag("--smote-before-cv", cl.opt.smote_before_cv,
                  "Leaky compatibility mode: oversample before folding");
    ccl->add_option("--smote-k", cl.opt.smote_k, "SMOTE neighbors");
    ccl->add_option("--trees", cl.opt.forest.n_trees, "Forest size");
    ccl->add_option("--tree-depth", cl.opt.forest.max_depth, "Forest max depth");
    ccl->add_option("--min-leaf", cl.opt.forest.min_leaf, "Forest min leaf size");
    ccl->add_option("--rounds", cl.opt.boost.n_rounds, "Boosting rounds");
    ccl->add_option("--boost-lr", cl.opt.boost.learning_rate, "Boosting learning rate");
    ccl->add_option("--boost-depth", cl.opt.boost.max_depth, "Boosting max depth");
    ccl->add_option("--lambda", cl.opt.boost.l2_lambda, "Boosting L2 lambda");
    ccl->add_option("--min-gain", cl.opt.boost.gamma_min_gain, "Boosting min split gain");
    ccl->add_option("--out", cl.out, "Also write the report JSON here");
    ccl->add_option("--seed", cl.opt.seed, "CV seed");

    CompareArgs cmp;
    auto* ccmp = app.add_subcommand("compare-spectra", "Mean-spectrum curves as CSV + SVG");
    ccmp->set_config("--config");
    ccmp->add_option("--pred", cmp.pred, "Predicted spectra CSV")->required();
    ccmp->add_option("--gt", cmp.gt, "Ground-truth spectra CSV")->required();
    ccmp->add_option("--out", cmp.out, "Output base path (.csv and .svg appended)");
    ccmp->add_option("--seed", dummy_seed, "Unused; accepted for uniformity");

    try {
        app.parse(argc, argv);
        if (cgen->parsed()) cmd_gen_synthetic(gen);
        else if (cprgb->parsed()) cmd_pseudo_rgb(prgb_cube, prgb_out);
        else if (clab->parsed()) cmd_make_labels(lab);
        else if (ctr->parsed()) cmd_train(tr);
        else if (crc->parsed()) cmd_reconstruct(rc);
        else if (cev->parsed()) cmd_evaluate(ev);
        else if (cex->parsed()) cmd_extract_spectra(ex);
        else if (ccl->parsed()) cmd_classify(cl);
        else if (ccmp->parsed()) cmd_compare_spectra(cmp);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        json err;
        err["error"] = "UsageError";
        err["message"] = e.what();
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return e.get_exit_code() ? e.get_exit_code() : 2;
    } catch (const Error& e) {
        json err;
        err["error"] = e.kind();
        err["message"] = e.what();
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    } catch (const std::exception& e) {
        json err;
        err["error"] = "Unexpected";
        err["message"] = e.what();
        std::fprintf(stderr, "%s\n", err.dump().c_str());
        return 1;
    }
    return 0;
}
