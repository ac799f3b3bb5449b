#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "msfm/bundle.hpp"
#include "msfm/config.hpp"
#include "msfm/coplanarity.hpp"
#include "msfm/errors.hpp"
#include "msfm/evaluate.hpp"
#include "msfm/io.hpp"
#include "msfm/linear_sfm.hpp"
#include "msfm/model_export.hpp"
#include "msfm/pipeline.hpp"
#include "msfm/state.hpp"
#include "msfm/synth.hpp"
#include "msfm/types.hpp"

namespace fs = std::filesystem;
using namespace msfm;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw DataError("cannot write " + p.string());
    return out;
}

void log_frame(const ManhattanFrame& f, const fs::path& p) {
    auto out = open_out(p);
    out << "axis,x,y,z\n";
    out << "x," << fmt(f.vx.x()) << ',' << fmt(f.vx.y()) << ',' << fmt(f.vx.z()) << '\n';
    out << "y," << fmt(f.vy.x()) << ',' << fmt(f.vy.y()) << ',' << fmt(f.vy.z()) << '\n';
    out << "z," << fmt(f.vz.x()) << ',' << fmt(f.vz.y()) << ',' << fmt(f.vz.z()) << '\n';
}

void log_rotations(const std::vector<int>& ids, const std::vector<Rotation>& rots,
                   const fs::path& p) {
    auto out = open_out(p);
    out << "frame_id,r00,r01,r02,r10,r11,r12,r20,r21,r22\n";
    for (size_t i = 0; i < ids.size(); ++i) {
        out << ids[i];
        const Mat3& m = rots[i].matrix();
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) out << ',' << fmt(m(r, c));
        out << '\n';
    }
}

void log_tracks(const std::vector<LineTrack>& tracks, const fs::path& p) {
    auto out = open_out(p);
    out << "track_id,frame_id,segment_index,label\n";
    for (const auto& t : tracks)
        for (const auto& [f, s] : t.obs)
            out << t.id << ',' << f << ',' << s << ',' << axis_name(t.label) << '\n';
}

void log_relations(const std::vector<CoplanarityRelation>& rels, const fs::path& p) {
    auto out = open_out(p);
    out << "kind,frame_id,track_a,track_b,normal_axis\n";
    for (const auto& r : rels) {
        if (r.kind == RelationKind::Floor) {
            for (int tid : r.floor_tracks)
                out << relation_kind_name(r.kind) << ',' << r.frame_id << ',' << tid << ",,"
                    << axis_name(r.normal_axis) << '\n';
        } else {
            out << relation_kind_name(r.kind) << ',' << r.frame_id << ',' << r.track_a << ','
                << r.track_b << ',' << axis_name(r.normal_axis) << '\n';
        }
    }
}

void log_solution(const SfmSolution& sol, const std::vector<LineTrack>& tracks,
                  const fs::path& p) {
    using nlohmann::json;
    std::map<int, const LineTrack*> by_id;
    for (const auto& t : tracks) by_id[t.id] = &t;

    json j;
    j["frame_ids"] = sol.frame_ids;
    json ts = json::array();
    for (const auto& t : sol.translations) ts.push_back({t.x(), t.y(), t.z()});
    j["translations"] = ts;
    json jt = json::array();
    for (size_t i = 0; i < sol.track_ids.size(); ++i) {
        const LineTrack* t = by_id.at(sol.track_ids[i]);
        json depths = json::array();
        for (size_t k = 0; k < sol.depths[i].size(); ++k)
            depths.push_back({{"frame_id", t->obs[k].first}, {"depth", sol.depths[i][k]}});
        jt.push_back({{"track_id", sol.track_ids[i]}, {"depths", depths}});
    }
    j["tracks"] = jt;
    j["n_components"] = sol.n_components;
    j["registered_ratio"] = sol.registered_ratio;
    j["kkt"] = {{"stationarity", sol.kkt_stationarity},
                {"complementarity", sol.kkt_complementarity}};
    open_out(p) << j.dump(2) << "\n";
}

void log_ba_cost(const BundleResult& ba, const fs::path& p) {
    auto out = open_out(p);
    out << "phase,iteration,cost\n";
    for (const auto& e : ba.cost_log)
        out << e.phase << ',' << e.iteration << ',' << fmt(e.cost) << '\n';
}

void write_stage_logs(const PipelineState& st, const fs::path& dir) {
    if (st.segments) write_segments_csv(*st.segments, dir / "segments.csv");
    if (st.frame) log_frame(*st.frame, dir / "frame.csv");
    if (st.frame_ids && st.rotations)
        log_rotations(*st.frame_ids, *st.rotations, dir / "rotations.csv");
    if (st.tracks) log_tracks(*st.tracks, dir / "tracks.csv");
    if (st.relations) log_relations(*st.relations, dir / "relations.csv");
    if (st.solution && st.tracks) log_solution(*st.solution, *st.tracks, dir / "solution.json");
    if (st.bundle) log_ba_cost(*st.bundle, dir / "ba_cost.csv");
}

Config load_cfg(const std::string& path) {
    if (path.empty()) return Config{};
    return load_config(path);
}

void print_solution(const SfmSolution& sol) {
    std::cout << "solve: " << sol.frame_ids.size() << " frames, " << sol.track_ids.size()
              << " tracks in largest of " << sol.n_components
              << " component(s), registered ratio " << sol.registered_ratio
              << ", kkt stationarity " << sol.kkt_stationarity << ", complementarity "
              << sol.kkt_complementarity << "\n";
}

void print_bundle(const BundleResult& ba) {
    std::cout << "ba: cost " << ba.initial_cost << " -> " << ba.final_cost << " in "
              << ba.iterations << " accepted steps, mean reprojection " << ba.mean_reproj_px
              << " px\n";
}

void print_report(const EvaluationReport& rep) {
    std::cout << "rotation error deg (frame-0 aligned): before mean " << rep.rot_before_deg.mean
              << " max " << rep.rot_before_deg.max << ", after mean " << rep.rot_after_deg.mean
              << " max " << rep.rot_after_deg.max << "\n";
    std::cout << "manhattan frame worst axis error: " << rep.frame_axis_worst_deg << " deg\n";
    std::cout << "translation rmse: " << rep.translation_rmse_m << " m ("
              << rep.translation_rmse_frac << " of scene diameter)\n";
    std::cout << "depth relative error: mean " << rep.depth_rel_error.mean << " max "
              << rep.depth_rel_error.max << "\n";
    for (const auto& [name, sc] : rep.relations)
        std::cout << "coplanarity " << name << ": precision " << sc.precision() << " ("
                  << sc.correct << "/" << sc.detected << "), recall " << sc.recall() << " ("
                  << sc.recalled << "/" << sc.gt_pairs << ")\n";
    std::cout << "track purity: " << rep.track_purity_value << "\n";
    std::cout << "reprojection px: before mean " << rep.reproj_before_px.mean << ", after mean "
              << rep.reproj_after_px.mean << "\n";
    std::cout << "registered ratio: " << rep.registered_ratio << " over " << rep.n_components
              << " component(s)\n";
}

struct Options {
    std::string dataset;
    std::string out_dir;
    std::string config_path;
    std::string state_path;
    std::string gt_path;
    std::string report_path;
    std::string ply_path;
    std::string json_path;
    std::string phase = "all";
    bool verbose = false;
    bool no_normals = false;

    fs::path out(const fs::path& droot) const {
        return out_dir.empty() ? droot / "out" : fs::path(out_dir);
    }
    fs::path state(const fs::path& out) const {
        return state_path.empty() ? out / "state.bin" : fs::path(state_path);
    }
};

int do_synth(const Options& o) {
    Config cfg = load_cfg(o.config_path);
    const fs::path out = o.out_dir;
    fs::create_directories(out);
    SynthOptions opt;
    opt.render_normal_maps = !o.no_normals;
    opt.stream_dir = out;
    const auto t0 = std::chrono::steady_clock::now();
    auto [data, gt] = generate_scene(cfg.scene, opt);
    save_dataset(data, out);
    save_ground_truth(gt, out / "ground_truth.json");
    save_config(cfg, out / "config.json");
    if (o.verbose)
        std::cerr << "synth: "
                  << std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                  << " s\n";
    std::cout << "synth: " << data.frames.size() << " frames, " << data.segments.size()
              << " segments, " << gt.lines.size() << " gt lines -> " << out.string() << "\n";
    return 0;
}

int do_stage(const std::string& name, const Options& o) {
    const Config cfg = load_cfg(o.config_path);
    const fs::path droot = o.dataset;
    const Dataset data = load_dataset(droot);
    const fs::path out = o.out(droot);
    fs::create_directories(out);
    const fs::path sp = o.state(out);
    PipelineState st;
    if (fs::exists(sp)) st = load_state(sp);

    const auto t0 = std::chrono::steady_clock::now();
    if (name == "preprocess") {
        stage_preprocess(data, st, cfg.pipeline);
    } else if (name == "frame") {
        stage_frame(data, st, cfg.pipeline);
    } else if (name == "refine-rotations") {
        stage_refine_rotations(data, st, cfg.pipeline);
    } else if (name == "track") {
        stage_track(data, st, cfg.pipeline);
    } else if (name == "coplanarity") {
        stage_coplanarity(data, st, cfg.pipeline);
    } else if (name == "solve") {
        stage_solve(data, st, cfg.pipeline);
    } else {
        const int max_phase = o.phase == "all" ? 3 : std::stoi(o.phase);
        stage_bundle(data, st, cfg.pipeline, max_phase);
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    save_state(st, sp);
    if (o.verbose) std::cerr << name << ": " << dt << " s\n";

    if (name == "preprocess") {
        write_segments_csv(*st.segments, out / "segments.csv");
        std::cout << "preprocess: " << data.segments.size() << " raw -> " << st.segments->size()
                  << " segments\n";
    } else if (name == "frame") {
        log_frame(*st.frame, out / "frame.csv");
        const ManhattanFrame& f = *st.frame;
        std::cout << "frame: vx [" << f.vx.transpose() << "] vy [" << f.vy.transpose() << "] vz ["
                  << f.vz.transpose() << "]\n";
    } else if (name == "refine-rotations") {
        log_rotations(*st.frame_ids, *st.rotations, out / "rotations.csv");
        std::cout << "refine-rotations: " << st.frame_ids->size() << " frames\n";
    } else if (name == "track") {
        log_tracks(*st.tracks, out / "tracks.csv");
        size_t n_obs = 0;
        for (const auto& t : *st.tracks) n_obs += t.obs.size();
        std::cout << "track: " << st.tracks->size() << " tracks, " << n_obs << " observations\n";
    } else if (name == "coplanarity") {
        log_relations(*st.relations, out / "relations.csv");
        std::map<std::string, int> counts;
        for (const auto& r : *st.relations) ++counts[relation_kind_name(r.kind)];
        std::cout << "coplanarity:";
        for (const auto& [k, n] : counts) std::cout << ' ' << k << ' ' << n;
        std::cout << "\n";
    } else if (name == "solve") {
        log_solution(*st.solution, *st.tracks, out / "solution.json");
        print_solution(*st.solution);
    } else {
        log_ba_cost(*st.bundle, out / "ba_cost.csv");
        print_bundle(*st.bundle);
    }
    return 0;
}

int do_evaluate(const Options& o) {
    const fs::path droot = o.dataset;
    const Dataset data = load_dataset(droot);
    const fs::path out = o.out(droot);
    fs::create_directories(out);
    const PipelineState st = load_state(o.state(out));
    const fs::path gp = o.gt_path.empty() ? droot / "ground_truth.json" : fs::path(o.gt_path);
    const GroundTruth gt = load_ground_truth(gp);
    const EvaluationReport rep = evaluate_pipeline(data, gt, st);
    const fs::path rp = o.report_path.empty() ? out / "report.json" : fs::path(o.report_path);
    save_report(rep, rp);
    print_report(rep);
    std::cout << "report -> " << rp.string() << "\n";
    return 0;
}

int do_export(const Options& o) {
    const fs::path droot = o.dataset;
    const Dataset data = load_dataset(droot);
    const fs::path out = o.out(droot);
    fs::create_directories(out);
    const PipelineState st = load_state(o.state(out));
    const LineModel model = build_model(data, st);
    const fs::path pp = o.ply_path.empty() ? out / "model.ply" : fs::path(o.ply_path);
    const fs::path jp = o.json_path.empty() ? out / "model.json" : fs::path(o.json_path);
    save_model_ply(model, pp);
    save_model_json(model, jp);
    std::cout << "export: " << model.lines.size() << " lines, " << model.frame_ids.size()
              << " cameras -> " << pp.string() << ", " << jp.string() << "\n";
    return 0;
}

int do_run(const Options& o) {
    const Config cfg = load_cfg(o.config_path);
    const fs::path droot = o.dataset;
    const Dataset data = load_dataset(droot);
    const fs::path out = o.out(droot);
    fs::create_directories(out);
    const fs::path sp = o.state(out);

    std::map<std::string, double> timings;
    const PipelineState st = run_pipeline(data, cfg.pipeline, sp, &timings);
    write_stage_logs(st, out);

    const LineModel model = build_model(data, st);
    save_model_ply(model, out / "model.ply");
    save_model_json(model, out / "model.json");

    print_solution(st.require_solution());
    print_bundle(st.require_bundle());

    const fs::path gp = o.gt_path.empty() ? droot / "ground_truth.json" : fs::path(o.gt_path);
    if (fs::exists(gp)) {
        const GroundTruth gt = load_ground_truth(gp);
        EvaluationReport rep = evaluate_pipeline(data, gt, st);
        rep.stage_seconds = timings;
        save_report(rep, out / "report.json");
        print_report(rep);
    } else {
        std::cout << "run: no ground truth at " << gp.string() << ", skipping evaluation\n";
    }
    if (o.verbose) {
        double total = 0;
        for (const auto& [k, v] : timings) {
            std::cerr << k << ": " << v << " s\n";
            total += v;
        }
        std::cerr << "total: " << total << " s\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"line-based structure from motion for panoramic indoor capture"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* c) {
        c->add_option("dataset", o.dataset, "dataset directory")->required();
        c->add_option("--config", o.config_path, "config JSON (defaults when omitted)");
        c->add_option("--state", o.state_path, "state file (default <out>/state.bin)");
        c->add_option("--out", o.out_dir, "artifact directory (default <dataset>/out)");
        c->add_flag("--verbose,-v", o.verbose, "timing detail to stderr");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
    synth->add_option("--out", o.out_dir, "output dataset directory")->required();
    synth->add_option("--config", o.config_path, "config JSON with scene parameters");
    synth->add_flag("--no-normals", o.no_normals, "skip normal map rendering");
    synth->add_flag("--verbose,-v", o.verbose, "timing detail to stderr");

    const std::vector<std::string> stage_names = {"preprocess", "frame",       "refine-rotations",
                                                  "track",      "coplanarity", "solve",
                                                  "ba"};
    const std::vector<std::string> stage_help = {
        "merge, filter, and length-gate raw segments",
        "extract the Manhattan frame by sphere voting",
        "refine per-frame rotations against the frame",
        "match segments across frames into tracks",
        "detect coplanarity relations between tracks",
        "linear depth and translation initialization",
        "three-phase bundle adjustment"};
    std::map<std::string, CLI::App*> stage_cmds;
    for (size_t i = 0; i < stage_names.size(); ++i) {
        CLI::App* c = app.add_subcommand(stage_names[i], stage_help[i]);
        add_common(c);
        stage_cmds[stage_names[i]] = c;
    }
    stage_cmds["ba"]
        ->add_option("--phase", o.phase, "run phases 1..N (default all)")
        ->check(CLI::IsMember({"1", "2", "3", "all"}));

    CLI::App* evaluate = app.add_subcommand("evaluate", "score the state against ground truth");
    add_common(evaluate);
    evaluate->add_option("--gt", o.gt_path, "ground truth JSON (default <dataset>/ground_truth.json)");
    evaluate->add_option("--report", o.report_path, "report path (default <out>/report.json)");

    CLI::App* exp = app.add_subcommand("export", "write the line model as PLY and JSON");
    add_common(exp);
    exp->add_option("--ply", o.ply_path, "PLY path (default <out>/model.ply)");
    exp->add_option("--json", o.json_path, "JSON path (default <out>/model.json)");

    CLI::App* run = app.add_subcommand("run", "full pipeline, export, and evaluation");
    add_common(run);
    run->add_option("--gt", o.gt_path, "ground truth JSON (default <dataset>/ground_truth.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (app.got_subcommand(synth)) return do_synth(o);
        if (app.got_subcommand(evaluate)) return do_evaluate(o);
        if (app.got_subcommand(exp)) return do_export(o);
        if (app.got_subcommand(run)) return do_run(o);
        for (const auto& [name, cmd] : stage_cmds)
            if (app.got_subcommand(cmd)) return do_stage(name, o);
        throw DataError("no subcommand");
    } catch (const NumericError& e) {
        std::cerr << "msfm: numeric error: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "msfm: data error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "msfm: error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "msfm: error: " << e.what() << "\n";
        return 2;
    }
}
