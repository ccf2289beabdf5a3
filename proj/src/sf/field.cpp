#include "sf/field.hpp"

#include <cmath>

#include "sf/binio.hpp"

namespace sf {

namespace {

constexpr char kFieldMagic[8] = {'S', 'F', 'F', 'I', 'E', 'L', 'D', '1'};
constexpr char kLoraMagic[8] = {'S', 'F', 'L', 'O', 'R', 'A', '0', '1'};
constexpr std::uint32_t kVersion = 1;

Tensor layer_w_tensor(const DenseLayer& l) {
    Tensor t(l.out, l.in);
    for (std::int64_t i = 0; i < t.size(); ++i) t.v[i] = l.w[static_cast<std::size_t>(i)];
    return t;
}

Tensor layer_b_tensor(const DenseLayer& l) {
    Tensor t(1, l.out);
    for (std::int64_t i = 0; i < t.size(); ++i) t.v[i] = l.b[static_cast<std::size_t>(i)];
    return t;
}

}  // namespace

void DenseLayer::resize(std::int64_t in_dim, std::int64_t out_dim) {
    in = in_dim;
    out = out_dim;
    w.assign(static_cast<std::size_t>(in * out), 0.0f);
    b.assign(static_cast<std::size_t>(out), 0.0f);
}

VelocityFieldParams init_field(int width, int depth, int l_pos, int l_time, Rng rng) {
    require(width >= 1 && depth >= 2, "field needs width >= 1 and depth >= 2");
    VelocityFieldParams p;
    p.l_pos = l_pos;
    p.l_time = l_time;
    p.width = width;
    p.depth = depth;
    p.hidden.resize(depth);
    p.hidden[0].resize(p.input_dim(), width);
    for (int j = 1; j < depth; ++j) p.hidden[j].resize(width, width);
    for (int j = 0; j < depth; ++j) {
        Rng layer_rng = rng.child("hidden", static_cast<std::uint64_t>(j));
        // He init for the ReLU stack; biases stay zero
        float s = static_cast<float>(std::sqrt(2.0 / static_cast<real>(p.hidden[j].in)));
        for (auto& x : p.hidden[j].w) x = static_cast<float>(layer_rng.normal()) * s;
    }
    p.head_v.resize(width, 3);
    p.head_w.resize(width, 3);
    p.head_e.resize(width, 2);
    return p;
}

LoraDelta init_lora(const VelocityFieldParams& heads_from, int rank, Rng rng) {
    require(rank >= 1, "lora rank must be >= 1");
    require(rank < heads_from.width, "lora rank must be below layer width");
    LoraDelta d;
    d.rank = rank;
    d.scaling = 1.0 / static_cast<real>(rank);
    d.pairs.resize(heads_from.depth - 1);
    for (std::size_t j = 0; j < d.pairs.size(); ++j) {
        std::int64_t in = heads_from.hidden[j + 1].in;
        std::int64_t out = heads_from.hidden[j + 1].out;
        auto& pr = d.pairs[j];
        pr.a.assign(static_cast<std::size_t>(out * rank), 0.0f);  // zero: delta starts as no-op
        pr.b.resize(static_cast<std::size_t>(rank * in));
        Rng pair_rng = rng.child("lora_b", static_cast<std::uint64_t>(j));
        float s = static_cast<float>(std::sqrt(1.0 / static_cast<real>(in)));
        for (auto& x : pr.b) x = static_cast<float>(pair_rng.normal()) * s;
    }
    d.head_v = heads_from.head_v;
    d.head_w = heads_from.head_w;
    d.head_e = heads_from.head_e;
    return d;
}

VelocityFieldParams apply_lora(const VelocityFieldParams& base, const LoraDelta& delta) {
    if (delta.pairs.size() != static_cast<std::size_t>(base.depth - 1))
        throw ShapeMismatch("lora delta layer count does not match field depth");
    VelocityFieldParams out = base;
    for (std::size_t j = 0; j < delta.pairs.size(); ++j) {
        DenseLayer& layer = out.hidden[j + 1];
        const auto& pr = delta.pairs[j];
        if (pr.a.size() != static_cast<std::size_t>(layer.out * delta.rank) ||
            pr.b.size() != static_cast<std::size_t>(delta.rank * layer.in))
            throw ShapeMismatch("lora pair shape does not match layer");
        for (std::int64_t o = 0; o < layer.out; ++o)
            for (std::int64_t i = 0; i < layer.in; ++i) {
                real acc = 0;
                for (int k = 0; k < delta.rank; ++k)
                    acc += static_cast<real>(pr.a[o * delta.rank + k]) *
                           static_cast<real>(pr.b[k * layer.in + i]);
                layer.w[o * layer.in + i] =
                    static_cast<float>(static_cast<real>(layer.w[o * layer.in + i]) + delta.scaling * acc);
            }
    }
    if (delta.head_v.in != base.head_v.in || delta.head_w.in != base.head_w.in ||
        delta.head_e.in != base.head_e.in)
        throw ShapeMismatch("lora head shape does not match field");
    out.head_v = delta.head_v;
    out.head_w = delta.head_w;
    out.head_e = delta.head_e;
    return out;
}

VelocityFieldParams materialize(const SegmentField& field) {
    VelocityFieldParams p = field.base;
    for (const auto& d : field.deltas) p = apply_lora(p, d);
    return p;
}

FieldVars make_field_vars(Tape& tape, const SegmentField& field, bool trainable) {
    FieldVars fv;
    const bool imt = !field.deltas.empty();
    const VelocityFieldParams* src = &field.base;
    VelocityFieldParams frozen;
    if (imt) {
        // base plus all earlier deltas is the frozen backbone; the last delta
        // is this segment's live adapter
        SegmentField prior{field.base, {field.deltas.begin(), field.deltas.end() - 1}};
        frozen = materialize(prior);
        src = &frozen;
    }
    fv.l_pos = src->l_pos;
    fv.l_time = src->l_time;
    bool train_backbone = trainable && !imt;
    for (const auto& layer : src->hidden) {
        fv.hidden_w.push_back(tape.leaf(layer_w_tensor(layer), train_backbone));
        fv.hidden_b.push_back(tape.leaf(layer_b_tensor(layer), train_backbone));
    }
    const DenseLayer& hv = imt ? field.deltas.back().head_v : src->head_v;
    const DenseLayer& hw = imt ? field.deltas.back().head_w : src->head_w;
    const DenseLayer& he = imt ? field.deltas.back().head_e : src->head_e;
    fv.head_v_w = tape.leaf(layer_w_tensor(hv), trainable);
    fv.head_v_b = tape.leaf(layer_b_tensor(hv), trainable);
    fv.head_w_w = tape.leaf(layer_w_tensor(hw), trainable);
    fv.head_w_b = tape.leaf(layer_b_tensor(hw), trainable);
    fv.head_e_w = tape.leaf(layer_w_tensor(he), trainable);
    fv.head_e_b = tape.leaf(layer_b_tensor(he), trainable);
    if (imt) {
        const LoraDelta& d = field.deltas.back();
        fv.lora_active = true;
        fv.lora_scaling = d.scaling;
        for (std::size_t j = 0; j < d.pairs.size(); ++j) {
            std::int64_t out = src->hidden[j + 1].out, in = src->hidden[j + 1].in;
            Tensor a(out, d.rank), b(d.rank, in);
            for (std::int64_t i = 0; i < a.size(); ++i) a.v[i] = d.pairs[j].a[static_cast<std::size_t>(i)];
            for (std::int64_t i = 0; i < b.size(); ++i) b.v[i] = d.pairs[j].b[static_cast<std::size_t>(i)];
            fv.lora_a.push_back(tape.leaf(std::move(a), trainable));
            fv.lora_b.push_back(tape.leaf(std::move(b), trainable));
        }
    }
    return fv;
}

FieldOutput eval_field(Tape& tape, const FieldVars& fv, const Var& mu, real t) {
    require(mu.cols() == 3, "eval_field: mu must be Nx3");
    std::int64_t n = mu.rows();
    Tensor tt(1, 1);
    tt.v[0] = t;
    Var enc_t = tape.posenc(tape.constant(std::move(tt)), fv.l_time);
    Var enc_mu = tape.posenc(mu, fv.l_pos);
    Var h = tape.concat_cols(enc_mu, tape.repeat_row(enc_t, n));
    for (std::size_t j = 0; j < fv.hidden_w.size(); ++j) {
        if (fv.lora_active && j >= 1)
            h = tape.linear_lora(h, fv.hidden_w[j], fv.hidden_b[j], fv.lora_a[j - 1], fv.lora_b[j - 1],
                                 fv.lora_scaling);
        else
            h = tape.linear(h, fv.hidden_w[j], fv.hidden_b[j]);
        h = tape.relu(h);
    }
    FieldOutput out;
    out.v = tape.linear(h, fv.head_v_w, fv.head_v_b);
    out.w = tape.linear(h, fv.head_w_w, fv.head_w_b);
    out.e = tape.linear(h, fv.head_e_w, fv.head_e_b);
    return out;
}

SnapshotVars deform(Tape& tape, const SnapshotVars& canonical, const FieldOutput& f, real t) {
    SnapshotVars out;
    out.mu = tape.axpy(canonical.mu, t, f.v);
    // phi(w t) (x) q; the product of unit quaternions stays unit to machine
    // precision, so no renormalization — keeps deform at t=0 bitwise exact
    out.quat = tape.quat_mul_rows(tape.quat_expmap(tape.scale(f.w, t)), canonical.quat);
    out.scale = tape.clamp_min(tape.axpy(canonical.scale, t, f.e), 1e-6);
    out.opacity = canonical.opacity;
    out.color = canonical.color;
    return out;
}

DeformedSnapshot deform_surfels(const SurfelSet& s, const SegmentField& field, real t) {
    Tape tape;
    SurfelVars sv = make_surfel_vars(tape, s, false);
    SnapshotVars canonical = constrain_surfels(tape, sv);
    FieldVars fv = make_field_vars(tape, field, false);
    FieldOutput f = eval_field(tape, fv, canonical.mu, t);
    return snapshot_values(deform(tape, canonical, f, t));
}

// --- serialization -------------------------------------------------------------

namespace {

void write_layer(std::FILE* f, const DenseLayer& l, const std::string& path) {
    binio::write_pod(f, l.in, path);
    binio::write_pod(f, l.out, path);
    binio::write_exact(f, l.w.data(), l.w.size() * sizeof(float), path);
    binio::write_exact(f, l.b.data(), l.b.size() * sizeof(float), path);
}

DenseLayer read_layer(std::FILE* f, const std::string& path) {
    DenseLayer l;
    l.in = binio::read_pod<std::int64_t>(f, path);
    l.out = binio::read_pod<std::int64_t>(f, path);
    if (l.in < 0 || l.out < 0 || l.in > 1 << 20 || l.out > 1 << 20)
        throw ProtocolError("implausible layer shape in " + path);
    l.w.resize(static_cast<std::size_t>(l.in * l.out));
    l.b.resize(static_cast<std::size_t>(l.out));
    binio::read_exact(f, l.w.data(), l.w.size() * sizeof(float), path);
    binio::read_exact(f, l.b.data(), l.b.size() * sizeof(float), path);
    return l;
}

std::int64_t layer_bytes(const DenseLayer& l) {
    return 16 + static_cast<std::int64_t>(sizeof(float)) * (l.in * l.out + l.out);
}

}  // namespace

void save_field(const VelocityFieldParams& p, const std::string& path) {
    auto f = binio::open_write(path);
    binio::write_exact(f.get(), kFieldMagic, sizeof(kFieldMagic), path);
    binio::write_pod(f.get(), kVersion, path);
    binio::write_pod(f.get(), static_cast<std::int32_t>(p.l_pos), path);
    binio::write_pod(f.get(), static_cast<std::int32_t>(p.l_time), path);
    binio::write_pod(f.get(), static_cast<std::int32_t>(p.width), path);
    binio::write_pod(f.get(), static_cast<std::int32_t>(p.depth), path);
    for (const auto& l : p.hidden) write_layer(f.get(), l, path);
    write_layer(f.get(), p.head_v, path);
    write_layer(f.get(), p.head_w, path);
    write_layer(f.get(), p.head_e, path);
}

VelocityFieldParams load_field(const std::string& path) {
    auto f = binio::open_read(path);
    binio::check_magic(f.get(), kFieldMagic, path);
    if (binio::read_pod<std::uint32_t>(f.get(), path) != kVersion)
        throw ProtocolError("unsupported field version in " + path);
    VelocityFieldParams p;
    p.l_pos = binio::read_pod<std::int32_t>(f.get(), path);
    p.l_time = binio::read_pod<std::int32_t>(f.get(), path);
    p.width = binio::read_pod<std::int32_t>(f.get(), path);
    p.depth = binio::read_pod<std::int32_t>(f.get(), path);
    if (p.depth < 2 || p.depth > 64) throw ProtocolError("implausible field depth in " + path);
    p.hidden.resize(p.depth);
    for (auto& l : p.hidden) l = read_layer(f.get(), path);
    p.head_v = read_layer(f.get(), path);
    p.head_w = read_layer(f.get(), path);
    p.head_e = read_layer(f.get(), path);
    return p;
}

void save_lora(const LoraDelta& d, const std::string& path) {
    auto f = binio::open_write(path);
    binio::write_exact(f.get(), kLoraMagic, sizeof(kLoraMagic), path);
    binio::write_pod(f.get(), kVersion, path);
    binio::write_pod(f.get(), static_cast<std::int32_t>(d.rank), path);
    binio::write_pod(f.get(), d.scaling, path);
    binio::write_pod(f.get(), static_cast<std::int64_t>(d.pairs.size()), path);
    for (const auto& pr : d.pairs) {
        std::int64_t out = static_cast<std::int64_t>(pr.a.size()) / d.rank;
        std::int64_t in = static_cast<std::int64_t>(pr.b.size()) / d.rank;
        binio::write_pod(f.get(), out, path);
        binio::write_pod(f.get(), in, path);
        binio::write_exact(f.get(), pr.a.data(), pr.a.size() * sizeof(float), path);
        binio::write_exact(f.get(), pr.b.data(), pr.b.size() * sizeof(float), path);
    }
    write_layer(f.get(), d.head_v, path);
    write_layer(f.get(), d.head_w, path);
    write_layer(f.get(), d.head_e, path);
}

LoraDelta load_lora(const std::string& path) {
    auto f = binio::open_read(path);
    binio::check_magic(f.get(), kLoraMagic, path);
    if (binio::read_pod<std::uint32_t>(f.get(), path) != kVersion)
        throw ProtocolError("unsupported lora version in " + path);
    LoraDelta d;
    d.rank = binio::read_pod<std::int32_t>(f.get(), path);
    d.scaling = binio::read_pod<real>(f.get(), path);
    auto npairs = binio::read_pod<std::int64_t>(f.get(), path);
    if (d.rank < 1 || d.rank > 1 << 16 || npairs < 0 || npairs > 256)
        throw ProtocolError("implausible lora header in " + path);
    d.pairs.resize(static_cast<std::size_t>(npairs));
    for (auto& pr : d.pairs) {
        auto out = binio::read_pod<std::int64_t>(f.get(), path);
        auto in = binio::read_pod<std::int64_t>(f.get(), path);
        if (out < 0 || in < 0 || out > 1 << 20 || in > 1 << 20)
            throw ProtocolError("implausible lora pair shape in " + path);
        pr.a.resize(static_cast<std::size_t>(out * d.rank));
        pr.b.resize(static_cast<std::size_t>(d.rank * in));
        binio::read_exact(f.get(), pr.a.data(), pr.a.size() * sizeof(float), path);
        binio::read_exact(f.get(), pr.b.data(), pr.b.size() * sizeof(float), path);
    }
    d.head_v = read_layer(f.get(), path);
    d.head_w = read_layer(f.get(), path);
    d.head_e = read_layer(f.get(), path);
    return d;
}

std::int64_t field_file_bytes(const VelocityFieldParams& p) {
    std::int64_t n = 8 + 4 + 4 * 4;
    for (const auto& l : p.hidden) n += layer_bytes(l);
    return n + layer_bytes(p.head_v) + layer_bytes(p.head_w) + layer_bytes(p.head_e);
}

std::int64_t lora_file_bytes(const LoraDelta& d) {
    std::int64_t n = 8 + 4 + 4 + 8 + 8;
    for (const auto& pr : d.pairs)
        n += 16 + static_cast<std::int64_t>(sizeof(float)) *
                      static_cast<std::int64_t>(pr.a.size() + pr.b.size());
    return n + layer_bytes(d.head_v) + layer_bytes(d.head_w) + layer_bytes(d.head_e);
}

std::int64_t param_storage_bytes(const SegmentField& field, std::int64_t segment) {
    require(segment >= 0, "segment index must be >= 0");
    if (segment == 0) return field_file_bytes(field.base);
    require(segment <= static_cast<std::int64_t>(field.deltas.size()),
            "segment has no recorded delta");
    return lora_file_bytes(field.deltas[static_cast<std::size_t>(segment - 1)]);
}

}  // namespace sf
