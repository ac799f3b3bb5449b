#include "msfm/state.hpp"

#include <cstring>
#include <fstream>

#include "msfm/errors.hpp"

namespace msfm {
namespace {

constexpr char kMagic[4] = {'M', 'S', 'F', 'M'};
constexpr uint32_t kVersion = 1;

enum Section : uint32_t {
    kSegments = 1u << 0,
    kFrame = 1u << 1,
    kRotations = 1u << 2,
    kTracks = 1u << 3,
    kRelations = 1u << 4,
    kSolution = 1u << 5,
    kBundle = 1u << 6,
};

struct Writer {
    std::string buf;
    void u8(uint8_t v) { buf.push_back(static_cast<char>(v)); }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void i64(int64_t v) {
        uint64_t u = static_cast<uint64_t>(v);
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
    void f64(double v) {
        uint64_t u;
        std::memcpy(&u, &v, 8);
        for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
    void vec3(const Vec3& v) {
        f64(v.x());
        f64(v.y());
        f64(v.z());
    }
    void mat3(const Mat3& m) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) f64(m(r, c));
    }
};

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(size_t n) const {
        if (pos + n > buf.size()) throw DataError("state: truncated file");
    }
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    int64_t i64() {
        need(8);
        uint64_t u = 0;
        for (int i = 0; i < 8; ++i) u |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return static_cast<int64_t>(u);
    }
    double f64() {
        uint64_t u = static_cast<uint64_t>(i64());
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
    Vec3 vec3() {
        Vec3 v;
        v.x() = f64();
        v.y() = f64();
        v.z() = f64();
        return v;
    }
    Mat3 mat3() {
        Mat3 m;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) m(r, c) = f64();
        return m;
    }
    size_t count() {
        int64_t n = i64();
        if (n < 0 || static_cast<uint64_t>(n) > buf.size())
            throw DataError("state: corrupt element count");
        return static_cast<size_t>(n);
    }
};

void write_segments(Writer& w, const std::vector<LineSegment2D>& segs) {
    w.i64(static_cast<int64_t>(segs.size()));
    for (const auto& s : segs) {
        w.i64(s.frame_id);
        w.f64(s.p.x());
        w.f64(s.p.y());
        w.f64(s.q.x());
        w.f64(s.q.y());
        w.u8(s.label ? static_cast<uint8_t>(1 + static_cast<int>(*s.label)) : 0);
    }
}

std::vector<LineSegment2D> read_segments(Reader& r) {
    size_t n = r.count();
    std::vector<LineSegment2D> segs;
    segs.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        int frame = static_cast<int>(r.i64());
        Vec2 p, q;
        p.x() = r.f64();
        p.y() = r.f64();
        q.x() = r.f64();
        q.y() = r.f64();
        uint8_t lab = r.u8();
        if (lab > 3) throw DataError("state: bad segment label");
        auto s = LineSegment2D::make(frame, p, q);
        if (lab) s.label = axis_from_index(lab - 1);
        segs.push_back(s);
    }
    return segs;
}

void write_tracks(Writer& w, const std::vector<LineTrack>& tracks) {
    w.i64(static_cast<int64_t>(tracks.size()));
    for (const auto& t : tracks) {
        w.i64(t.id);
        w.u8(static_cast<uint8_t>(t.label));
        w.i64(static_cast<int64_t>(t.obs.size()));
        for (const auto& [f, s] : t.obs) {
            w.i64(f);
            w.i64(s);
        }
    }
}

std::vector<LineTrack> read_tracks(Reader& r) {
    size_t n = r.count();
    std::vector<LineTrack> tracks;
    tracks.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        LineTrack t;
        t.id = static_cast<int>(r.i64());
        uint8_t lab = r.u8();
        if (lab > 2) throw DataError("state: bad track label");
        t.label = axis_from_index(lab);
        size_t m = r.count();
        t.obs.reserve(m);
        for (size_t k = 0; k < m; ++k) {
            int f = static_cast<int>(r.i64());
            int s = static_cast<int>(r.i64());
            t.obs.emplace_back(f, s);
        }
        tracks.push_back(std::move(t));
    }
    return tracks;
}

void write_relations(Writer& w, const std::vector<CoplanarityRelation>& rels) {
    w.i64(static_cast<int64_t>(rels.size()));
    for (const auto& rel : rels) {
        w.u8(static_cast<uint8_t>(rel.kind));
        w.i64(rel.frame_id);
        w.i64(rel.track_a);
        w.i64(rel.track_b);
        w.u8(static_cast<uint8_t>(rel.normal_axis));
        w.i64(static_cast<int64_t>(rel.floor_tracks.size()));
        for (int t : rel.floor_tracks) w.i64(t);
    }
}

std::vector<CoplanarityRelation> read_relations(Reader& r) {
    size_t n = r.count();
    std::vector<CoplanarityRelation> rels;
    rels.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        CoplanarityRelation rel;
        uint8_t kind = r.u8();
        if (kind > 3) throw DataError("state: bad relation kind");
        rel.kind = static_cast<RelationKind>(kind);
        rel.frame_id = static_cast<int>(r.i64());
        rel.track_a = static_cast<int>(r.i64());
        rel.track_b = static_cast<int>(r.i64());
        uint8_t ax = r.u8();
        if (ax > 2) throw DataError("state: bad relation axis");
        rel.normal_axis = axis_from_index(ax);
        size_t m = r.count();
        rel.floor_tracks.reserve(m);
        for (size_t k = 0; k < m; ++k) rel.floor_tracks.push_back(static_cast<int>(r.i64()));
        rels.push_back(std::move(rel));
    }
    return rels;
}

void write_solution(Writer& w, const SfmSolution& s) {
    w.i64(static_cast<int64_t>(s.frame_ids.size()));
    for (int f : s.frame_ids) w.i64(f);
    for (const auto& t : s.translations) w.vec3(t);
    w.i64(static_cast<int64_t>(s.track_ids.size()));
    for (int t : s.track_ids) w.i64(t);
    for (const auto& d : s.depths) {
        w.i64(static_cast<int64_t>(d.size()));
        for (double v : d) w.f64(v);
    }
    w.i64(s.n_components);
    w.f64(s.registered_ratio);
    w.f64(s.kkt_stationarity);
    w.f64(s.kkt_complementarity);
}

SfmSolution read_solution(Reader& r) {
    SfmSolution s;
    size_t nf = r.count();
    s.frame_ids.reserve(nf);
    for (size_t i = 0; i < nf; ++i) s.frame_ids.push_back(static_cast<int>(r.i64()));
    s.translations.reserve(nf);
    for (size_t i = 0; i < nf; ++i) s.translations.push_back(r.vec3());
    size_t nt = r.count();
    s.track_ids.reserve(nt);
    for (size_t i = 0; i < nt; ++i) s.track_ids.push_back(static_cast<int>(r.i64()));
    s.depths.resize(nt);
    for (size_t i = 0; i < nt; ++i) {
        size_t m = r.count();
        s.depths[i].reserve(m);
        for (size_t k = 0; k < m; ++k) s.depths[i].push_back(r.f64());
    }
    s.n_components = static_cast<int>(r.i64());
    s.registered_ratio = r.f64();
    s.kkt_stationarity = r.f64();
    s.kkt_complementarity = r.f64();
    return s;
}

void write_bundle(Writer& w, const BundleResult& b) {
    w.i64(static_cast<int64_t>(b.frame_ids.size()));
    for (int f : b.frame_ids) w.i64(f);
    for (const auto& r : b.rotations) w.mat3(r.matrix());
    for (const auto& t : b.translations) w.vec3(t);
    w.f64(b.intrinsics.fx);
    w.f64(b.intrinsics.fy);
    w.f64(b.intrinsics.cx);
    w.f64(b.intrinsics.cy);
    w.i64(b.intrinsics.width);
    w.i64(b.intrinsics.height);
    w.mat3((Mat3() << b.frame.vx, b.frame.vy, b.frame.vz).finished());
    w.i64(static_cast<int64_t>(b.lines.size()));
    for (const auto& l : b.lines) {
        w.i64(l.track_id);
        w.u8(static_cast<uint8_t>(l.axis));
        w.vec3(l.point);
    }
    w.f64(b.initial_cost);
    w.f64(b.final_cost);
    w.f64(b.mean_reproj_px);
    w.i64(b.iterations);
}

BundleResult read_bundle(Reader& r) {
    BundleResult b;
    size_t nf = r.count();
    b.frame_ids.reserve(nf);
    for (size_t i = 0; i < nf; ++i) b.frame_ids.push_back(static_cast<int>(r.i64()));
    b.rotations.reserve(nf);
    for (size_t i = 0; i < nf; ++i) b.rotations.push_back(Rotation(r.mat3()));
    b.translations.reserve(nf);
    for (size_t i = 0; i < nf; ++i) b.translations.push_back(r.vec3());
    b.intrinsics.fx = r.f64();
    b.intrinsics.fy = r.f64();
    b.intrinsics.cx = r.f64();
    b.intrinsics.cy = r.f64();
    b.intrinsics.width = static_cast<int>(r.i64());
    b.intrinsics.height = static_cast<int>(r.i64());
    b.intrinsics.validate();
    Mat3 axes = r.mat3();
    b.frame = ManhattanFrame{axes.col(0), axes.col(1), axes.col(2)};
    b.frame.validate();
    size_t nl = r.count();
    b.lines.reserve(nl);
    for (size_t i = 0; i < nl; ++i) {
        Line3D l;
        l.track_id = static_cast<int>(r.i64());
        uint8_t ax = r.u8();
        if (ax > 2) throw DataError("state: bad line axis");
        l.axis = axis_from_index(ax);
        l.point = r.vec3();
        b.lines.push_back(l);
    }
    b.initial_cost = r.f64();
    b.final_cost = r.f64();
    b.mean_reproj_px = r.f64();
    b.iterations = static_cast<int>(r.i64());
    return b;
}

}  // namespace

const std::vector<LineSegment2D>& PipelineState::require_segments() const {
    if (!segments) throw DataError("state: preprocessed segments missing; run preprocess first");
    return *segments;
}
const ManhattanFrame& PipelineState::require_frame() const {
    if (!frame) throw DataError("state: Manhattan frame missing; run frame first");
    return *frame;
}
const std::vector<Rotation>& PipelineState::require_rotations() const {
    if (!rotations) throw DataError("state: refined rotations missing; run refine-rotations first");
    return *rotations;
}
const std::vector<int>& PipelineState::require_frame_ids() const {
    if (!frame_ids) throw DataError("state: refined rotations missing; run refine-rotations first");
    return *frame_ids;
}
const std::vector<LineTrack>& PipelineState::require_tracks() const {
    if (!tracks) throw DataError("state: tracks missing; run track first");
    return *tracks;
}
const std::vector<CoplanarityRelation>& PipelineState::require_relations() const {
    if (!relations) throw DataError("state: relations missing; run coplanarity first");
    return *relations;
}
const SfmSolution& PipelineState::require_solution() const {
    if (!solution) throw DataError("state: linear solution missing; run solve first");
    return *solution;
}
const BundleResult& PipelineState::require_bundle() const {
    if (!bundle) throw DataError("state: bundle result missing; run ba first");
    return *bundle;
}

void save_state(const PipelineState& st, const std::filesystem::path& path) {
    Writer w;
    w.buf.append(kMagic, 4);
    w.u32(kVersion);
    uint32_t mask = 0;
    if (st.segments) mask |= kSegments;
    if (st.frame) mask |= kFrame;
    if (st.rotations) mask |= kRotations;
    if (st.tracks) mask |= kTracks;
    if (st.relations) mask |= kRelations;
    if (st.solution) mask |= kSolution;
    if (st.bundle) mask |= kBundle;
    w.u32(mask);
    if (st.segments) write_segments(w, *st.segments);
    if (st.frame) {
        w.vec3(st.frame->vx);
        w.vec3(st.frame->vy);
        w.vec3(st.frame->vz);
    }
    if (st.rotations) {
        if (!st.frame_ids || st.frame_ids->size() != st.rotations->size())
            throw Error("state: rotations and frame ids out of sync");
        w.i64(static_cast<int64_t>(st.rotations->size()));
        for (int f : *st.frame_ids) w.i64(f);
        for (const auto& r : *st.rotations) w.mat3(r.matrix());
    }
    if (st.tracks) write_tracks(w, *st.tracks);
    if (st.relations) write_relations(w, *st.relations);
    if (st.solution) write_solution(w, *st.solution);
    if (st.bundle) write_bundle(w, *st.bundle);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write state file: " + path.string());
    out.write(w.buf.data(), static_cast<std::streamsize>(w.buf.size()));
    if (!out) throw DataError("short write on state file: " + path.string());
}

PipelineState load_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open state file: " + path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(buf);
    r.need(4);
    if (std::memcmp(buf.data(), kMagic, 4) != 0)
        throw DataError("state: bad magic, not a pipeline state file");
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != kVersion)
        throw DataError("state: file version " + std::to_string(version) +
                        " incompatible with supported version " + std::to_string(kVersion));
    uint32_t mask = r.u32();
    PipelineState st;
    if (mask & kSegments) st.segments = read_segments(r);
    if (mask & kFrame) {
        ManhattanFrame f;
        f.vx = r.vec3();
        f.vy = r.vec3();
        f.vz = r.vec3();
        f.validate();
        st.frame = f;
    }
    if (mask & kRotations) {
        size_t n = r.count();
        std::vector<int> ids;
        ids.reserve(n);
        for (size_t i = 0; i < n; ++i) ids.push_back(static_cast<int>(r.i64()));
        std::vector<Rotation> rots;
        rots.reserve(n);
        for (size_t i = 0; i < n; ++i) rots.push_back(Rotation(r.mat3()));
        st.frame_ids = std::move(ids);
        st.rotations = std::move(rots);
    }
    if (mask & kTracks) st.tracks = read_tracks(r);
    if (mask & kRelations) st.relations = read_relations(r);
    if (mask & kSolution) st.solution = read_solution(r);
    if (mask & kBundle) st.bundle = read_bundle(r);
    if (r.pos != buf.size()) throw DataError("state: trailing bytes after last section");
    return st;
}

}  // namespace msfm
