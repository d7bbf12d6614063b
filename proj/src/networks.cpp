#include "direid/networks.hpp"

#include <algorithm>

#include "direid/error.hpp"

namespace direid {

namespace F = torch::nn::functional;
using torch::nn::Conv2d;
using torch::nn::Conv2dOptions;
using torch::nn::LeakyReLU;
using torch::nn::LeakyReLUOptions;
using torch::nn::Linear;
using torch::nn::Sequential;

void NetworkConfig::validate() const {
    for (int v : {content_channels, degradation_channels, sensitive_channels, cue_channels, encoder_scales,
                  discriminator_scales, num_identities, base_width, attention_hidden}) {
        if (v < 1) throw ParameterError("network counts must be >= 1");
    }
    if (geometry.channels != 3) throw ShapeError("pipeline images must have 3 channels");
    if (geometry.height % 8 != 0 || geometry.width % 8 != 0 || geometry.height < 8 || geometry.width < 8) {
        throw ShapeError("image height and width must be positive multiples of 8");
    }
}

torch::Tensor to_tensor(std::span<const Image> images) {
    if (images.empty()) throw ShapeError("cannot batch zero images");
    const auto g = images.front().geometry();
    auto out = torch::empty({static_cast<long>(images.size()), g.channels, g.height, g.width});
    auto acc = out.accessor<float, 4>();
    for (std::size_t n = 0; n < images.size(); ++n) {
        const auto& img = images[n];
        if (img.geometry() != g) throw ShapeError("cannot batch images of different geometry");
        for (int y = 0; y < g.height; ++y)
            for (int x = 0; x < g.width; ++x)
                for (int c = 0; c < g.channels; ++c) acc[n][c][y][x] = img.at(y, x, c);
    }
    return out;
}

torch::Tensor to_tensor(const Image& image) { return to_tensor(std::span<const Image>(&image, 1)); }

Image to_image(const torch::Tensor& t) {
    auto chw = t.dim() == 4 ? t.squeeze(0) : t;
    if (chw.dim() != 3) throw ShapeError("to_image expects a (C, H, W) tensor");
    chw = chw.detach().to(torch::kFloat32).contiguous();
    Image img(static_cast<int>(chw.size(1)), static_cast<int>(chw.size(2)), static_cast<int>(chw.size(0)));
    auto acc = chw.accessor<float, 3>();
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            for (int c = 0; c < img.channels(); ++c) img.at(y, x, c) = acc[c][y][x];
    img.clamp01();
    return img;
}

void check_input(const torch::Tensor& x, const Geometry& g, const char* who) {
    if (x.dim() != 4 || x.size(1) != g.channels || x.size(2) != g.height || x.size(3) != g.width) {
        throw ShapeError(std::string(who) + ": expected (N, " + std::to_string(g.channels) + ", " +
                         std::to_string(g.height) + ", " + std::to_string(g.width) + ") input");
    }
}

torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& scale, const torch::Tensor& bias, double eps) {
    const bool single = x.dim() == 3;
    auto in = single ? x.unsqueeze(0) : x;
    auto s = scale.dim() == 1 ? scale.unsqueeze(0) : scale;
    auto b = bias.dim() == 1 ? bias.unsqueeze(0) : bias;
    if (in.dim() != 4 || s.size(-1) != in.size(1) || b.size(-1) != in.size(1)) {
        throw ShapeError("adain: scale/bias length must equal the channel count");
    }
    auto mean = in.mean({2, 3}, true);
    auto var = (in - mean).pow(2).mean({2, 3}, true);
    auto normalized = (in - mean) / (var + eps).sqrt();
    auto out = normalized * s.unsqueeze(-1).unsqueeze(-1) + b.unsqueeze(-1).unsqueeze(-1);
    return single ? out.squeeze(0) : out;
}

namespace {

Conv2d conv3(int in, int out, int stride = 1) {
    return Conv2d(Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

LeakyReLU lrelu() { return LeakyReLU(LeakyReLUOptions().negative_slope(0.2)); }

torch::Tensor leaky(const torch::Tensor& x) { return F::leaky_relu(x, F::LeakyReLUFuncOptions().negative_slope(0.2)); }

// Networks see inputs in [-1, 1]; centring removes the shared positive offset
// that otherwise dominates pooled features.
torch::Tensor centered(const torch::Tensor& x) { return x * 2.0 - 1.0; }

torch::Tensor pool_input(const torch::Tensor& x, int scale) {
    if (scale == 0) return x;
    const long k = 1L << scale;
    return F::avg_pool2d(x, F::AvgPool2dFuncOptions(k).stride(k).ceil_mode(true));
}

}  // namespace

ResidualBlockImpl::ResidualBlockImpl(int channels) {
    conv1 = register_module("conv1", conv3(channels, channels));
    conv2 = register_module("conv2", conv3(channels, channels));
}

torch::Tensor ResidualBlockImpl::forward(const torch::Tensor& x) {
    return x + conv2(leaky(conv1(leaky(x))));
}

// ---------------------------------------------------------------------------

ContentEncoderImpl::ContentEncoderImpl(const NetworkConfig& cfg) : geometry(cfg.geometry) {
    const int w = cfg.base_width;
    for (int s = 0; s < cfg.encoder_scales; ++s) {
        // Stride-2 layers so that every branch lands near H/4.
        const int strides = std::max(0, 2 - s);
        Sequential branch;
        branch->push_back(conv3(3, w, strides >= 2 ? 2 : 1));
        branch->push_back(lrelu());
        branch->push_back(conv3(w, 2 * w, strides >= 1 ? 2 : 1));
        branch->push_back(lrelu());
        branches.push_back(register_module("branch" + std::to_string(s), branch));
    }
    trunk = register_module("trunk", Sequential(ResidualBlock(2 * w), conv3(2 * w, 4 * w, 2), lrelu(),
                                                ResidualBlock(4 * w),
                                                Conv2d(Conv2dOptions(4 * w, cfg.content_channels, 1))));
}

ContentFeature ContentEncoderImpl::forward(const torch::Tensor& x) {
    check_input(x, geometry, "content encoder");
    const auto in = centered(x);
    const std::vector<long> size{geometry.height / 4, geometry.width / 4};
    torch::Tensor fused;
    for (std::size_t s = 0; s < branches.size(); ++s) {
        auto h = branches[s]->forward(pool_input(in, static_cast<int>(s)));
        if (h.size(2) != size[0] || h.size(3) != size[1]) {
            h = F::interpolate(h, F::InterpolateFuncOptions().size(size).mode(torch::kBilinear).align_corners(false));
        }
        fused = fused.defined() ? fused + h : h;
    }
    auto map = trunk->forward(fused);
    return {map, map.mean({2, 3})};
}

DegradationEncoderImpl::DegradationEncoderImpl(const NetworkConfig& cfg) : geometry(cfg.geometry) {
    const int w = cfg.base_width;
    features = register_module("features", Sequential(conv3(3, w, 2), lrelu(), conv3(w, 2 * w, 2), lrelu(),
                                                      conv3(2 * w, 4 * w, 2), lrelu()));
    head = register_module("head", Linear(4 * w, cfg.degradation_channels));
}

torch::Tensor DegradationEncoderImpl::forward(const torch::Tensor& x) {
    check_input(x, geometry, "degradation encoder");
    return head(features->forward(centered(x)).mean({2, 3}));
}

DecoderImpl::DecoderImpl(const NetworkConfig& c) : cfg(c) {
    const int w = cfg.base_width;
    const int cc = cfg.content_channels;
    adain_channels = {cc, cc, 2 * w, w};
    int total = 0;
    for (int ch : adain_channels) total += 2 * ch;
    const int hidden = std::max(cfg.degradation_channels, 64);
    mapping = register_module("mapping", Sequential(Linear(cfg.degradation_channels, hidden), lrelu(),
                                                    Linear(hidden, total)));
    res_conv1 = register_module("res_conv1", conv3(cc, cc));
    res_conv2 = register_module("res_conv2", conv3(cc, cc));
    up1 = register_module("up1", conv3(cc, 2 * w));
    up2 = register_module("up2", conv3(2 * w, w));
    up3 = register_module("up3", conv3(w, w));
    out = register_module("out", conv3(w, 3));
}

std::vector<std::pair<torch::Tensor, torch::Tensor>> DecoderImpl::adain_params(const torch::Tensor& code) {
    auto raw = mapping->forward(code);
    std::vector<std::pair<torch::Tensor, torch::Tensor>> params;
    long offset = 0;
    for (int ch : adain_channels) {
        auto scale = 1.0 + raw.narrow(1, offset, ch);
        auto bias = raw.narrow(1, offset + ch, ch);
        params.emplace_back(scale, bias);
        offset += 2 * ch;
    }
    return params;
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& content_map, const torch::Tensor& code) {
    const long h8 = cfg.geometry.height / 8;
    const long w8 = cfg.geometry.width / 8;
    if (content_map.dim() != 4 || content_map.size(1) != cfg.content_channels || content_map.size(2) != h8 ||
        content_map.size(3) != w8) {
        throw ShapeError("decoder: content map does not match the configured geometry");
    }
    if (code.dim() != 2 || code.size(1) != cfg.degradation_channels || code.size(0) != content_map.size(0)) {
        throw ShapeError("decoder: degradation code does not match the configuration");
    }
    const auto p = adain_params(code);
    auto up = [](const torch::Tensor& t) {
        return F::interpolate(t, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0}).mode(torch::kNearest));
    };
    auto h = content_map;
    auto r = leaky(adain(res_conv1(h), p[0].first, p[0].second));
    h = h + adain(res_conv2(r), p[1].first, p[1].second);
    h = leaky(adain(up1(up(h)), p[2].first, p[2].second));
    h = leaky(adain(up2(up(h)), p[3].first, p[3].second));
    h = leaky(up3(up(h)));
    return torch::sigmoid(out(h));
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl(const NetworkConfig& cfg, int penultimate) : geometry(cfg.geometry) {
    const int w = cfg.base_width;
    for (int s = 0; s < cfg.discriminator_scales; ++s) {
        auto body = Sequential(conv3(3, w, 2), lrelu(), conv3(w, 2 * w, 2), lrelu(), conv3(2 * w, penultimate, 2),
                               lrelu());
        bodies.push_back(register_module("body" + std::to_string(s), body));
        heads.push_back(register_module("head" + std::to_string(s), conv3(penultimate, 1)));
    }
}

PatchOutput PatchDiscriminatorImpl::forward(const torch::Tensor& x) {
    check_input(x, geometry, "patch discriminator");
    const auto in = centered(x);
    PatchOutput out;
    torch::Tensor cue;
    for (std::size_t s = 0; s < bodies.size(); ++s) {
        auto h = bodies[s]->forward(pool_input(in, static_cast<int>(s)));
        out.maps.push_back(heads[s](h));
        auto pooled = h.mean({2, 3});
        cue = cue.defined() ? cue + pooled : pooled;
    }
    out.cue = cue / static_cast<double>(bodies.size());
    return out;
}

IdentityEncoderImpl::IdentityEncoderImpl(const NetworkConfig& cfg) : geometry(cfg.geometry) {
    const int w = cfg.base_width;
    features = register_module("features", Sequential(conv3(3, 2 * w, 2), lrelu(), ResidualBlock(2 * w),
                                                      conv3(2 * w, 4 * w, 2), lrelu(), ResidualBlock(4 * w),
                                                      conv3(4 * w, 8 * w, 2), lrelu()));
    embed = register_module("embed", Linear(8 * w, cfg.sensitive_channels));
    classifier = register_module("classifier", Linear(cfg.sensitive_channels, cfg.num_identities));
}

IdentityOutput IdentityEncoderImpl::forward(const torch::Tensor& x) {
    check_input(x, geometry, "identity encoder");
    auto embedding = embed(features->forward(centered(x)).mean({2, 3}));
    return {embedding, classifier(embedding)};
}

AttentionHeadImpl::AttentionHeadImpl(const NetworkConfig& cfg) {
    fc1 = register_module("fc1", Linear(cfg.cue_channels, cfg.attention_hidden));
    fc2 = register_module("fc2", Linear(cfg.attention_hidden, cfg.sensitive_channels));
}

torch::Tensor AttentionHeadImpl::forward(const torch::Tensor& cue) {
    return torch::sigmoid(fc2(torch::relu(fc1(cue))));
}

IdentityRepresentation fuse_identity(torch::Tensor f_inv, torch::Tensor f_sen, torch::Tensor weights) {
    if (f_sen.sizes() != weights.sizes()) throw ShapeError("attention weights must match f_sen");
    if (f_inv.dim() != f_sen.dim() || f_inv.size(0) != f_sen.size(0)) throw ShapeError("feature batch mismatch");
    auto fused = torch::cat({f_inv, f_sen * weights}, -1);
    return {std::move(f_inv), std::move(f_sen), std::move(weights), std::move(fused)};
}

// ---------------------------------------------------------------------------

NetworksImpl::NetworksImpl(const NetworkConfig& c) : cfg(c) {
    cfg.validate();
    content_encoder = register_module("E_c", ContentEncoder(cfg));
    degradation_encoder = register_module("E_d", DegradationEncoder(cfg));
    self_degradation_encoder = register_module("E_d_self", DegradationEncoder(cfg));
    decoder = register_module("G", Decoder(cfg));
    reality_discriminator = register_module("D_r", PatchDiscriminator(cfg, 4 * cfg.base_width));
    degradation_discriminator = register_module("D_d", PatchDiscriminator(cfg, cfg.cue_channels));
    identity_encoder = register_module("E_id", IdentityEncoder(cfg));
    attention = register_module("Att", AttentionHead(cfg));
    content_classifier = register_module("cls_content", Linear(cfg.content_channels, cfg.num_identities));
    inv_classifier = register_module("cls_inv", Linear(cfg.content_channels, cfg.num_identities));
    sen_classifier = register_module("cls_sen", Linear(cfg.sensitive_channels, cfg.num_identities));
    both_classifier =
        register_module("cls_both", Linear(cfg.content_channels + cfg.sensitive_channels, cfg.num_identities));

    // He-normal weights for the leaky slope and zero biases, so that features
    // at initialization depend on the input rather than on accumulated biases.
    torch::NoGradGuard no_grad;
    for (auto& m : modules(false)) {
        torch::Tensor weight, bias;
        if (auto* conv = m->as<torch::nn::Conv2d>()) {
            weight = conv->weight;
            bias = conv->bias;
        } else if (auto* linear = m->as<torch::nn::Linear>()) {
            weight = linear->weight;
            bias = linear->bias;
        } else {
            continue;
        }
        torch::nn::init::kaiming_normal_(weight, 0.2, torch::kFanIn, torch::kLeakyReLU);
        if (bias.defined()) bias.zero_();
    }
}

ContentFeature NetworksImpl::encode_content(const torch::Tensor& x) { return content_encoder(x); }

DegradationCode NetworksImpl::encode_degradation(const torch::Tensor& x, DegradationSource source) {
    auto& encoder = source == DegradationSource::real_encoder ? degradation_encoder : self_degradation_encoder;
    return {encoder(x), source};
}

torch::Tensor NetworksImpl::decode(const torch::Tensor& content_map, const DegradationCode& code) {
    return decoder(content_map, code.vector);
}

std::vector<torch::Tensor> NetworksImpl::discriminate_reality(const torch::Tensor& x) {
    return reality_discriminator(x).maps;
}

DegradationScore NetworksImpl::degradation_score(const torch::Tensor& x) {
    auto out = degradation_discriminator(x);
    torch::Tensor sum;
    long count = 0;
    for (const auto& m : out.maps) {
        auto s = m.sum({1, 2, 3});
        sum = sum.defined() ? sum + s : s;
        count += m.size(1) * m.size(2) * m.size(3);
    }
    return {sum / static_cast<double>(count), out.cue, std::move(out.maps)};
}

IdentityOutput NetworksImpl::encode_identity(const torch::Tensor& x) { return identity_encoder(x); }

torch::Tensor NetworksImpl::attention_weights(const torch::Tensor& cue) {
    if (cue.size(-1) != cfg.cue_channels) throw ShapeError("attention: cue length mismatch");
    return attention(cue);
}

IdentityRepresentation NetworksImpl::identity_representation(const torch::Tensor& x, bool attention_enabled) {
    auto f_inv = encode_content(x).pooled;
    auto f_sen = encode_identity(x).embedding;
    auto weights = attention_enabled ? attention_weights(degradation_score(x).cue) : torch::ones_like(f_sen);
    return fuse_identity(std::move(f_inv), std::move(f_sen), std::move(weights));
}

std::vector<torch::Tensor> NetworksImpl::parameters_of(std::initializer_list<std::string_view> names) {
    std::vector<torch::Tensor> params;
    for (auto name : names) {
        bool found = false;
        for (const auto& child : named_children()) {
            if (child.key() == name) {
                auto p = child.value()->parameters();
                params.insert(params.end(), p.begin(), p.end());
                found = true;
            }
        }
        if (!found) throw ParameterError("unknown sub-network '" + std::string(name) + "'");
    }
    return params;
}

}  // namespace direid
