#pragma once

#include <torch/torch.h>

#include <span>
#include <string>
#include <vector>

#include "direid/image.hpp"

namespace direid {

/// Channel widths and multi-scale structure of every network.
struct NetworkConfig {
    Geometry geometry;
    int content_channels = 128;      // C_c
    int degradation_channels = 64;   // C_d
    int sensitive_channels = 256;    // C_s
    int cue_channels = 128;          // C_cue
    int encoder_scales = 3;
    int discriminator_scales = 2;
    int num_identities = 1;
    int base_width = 16;             // stem width; deeper layers use 2x and 4x
    int attention_hidden = 64;

    /// Throws ShapeError/ParameterError for counts < 1 or geometry that is not
    /// a multiple of 8.
    void validate() const;
    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

/// Batches images into an (N, 3, H, W) float tensor.
torch::Tensor to_tensor(std::span<const Image> images);
torch::Tensor to_tensor(const Image& image);
/// Converts one (3, H, W) or (1, 3, H, W) tensor back to an image (clamped).
Image to_image(const torch::Tensor& chw);

// ---------------------------------------------------------------------------
// Building blocks

/// Per-channel AdaIN: scale * (x - mean) / sqrt(var + eps) + bias, with the
/// moments taken over each sample's spatial positions.
/// x: (N, C, H, W) or (C, H, W); scale/bias: (N, C) or (C).
torch::Tensor adain(const torch::Tensor& x, const torch::Tensor& scale, const torch::Tensor& bias,
                    double eps = 1e-5);

struct ResidualBlockImpl : torch::nn::Module {
    explicit ResidualBlockImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
};
TORCH_MODULE(ResidualBlock);

// ---------------------------------------------------------------------------
// Networks

struct ContentFeature {
    torch::Tensor map;     // (N, C_c, H/8, W/8)
    torch::Tensor pooled;  // (N, C_c), spatial mean of map
};

/// Multi-scale content encoder: independent stems see the input at full,
/// 1/2, 1/4 ... resolution; their outputs are resized to H/4 and summed
/// before a shared trunk that halves the resolution once more.
struct ContentEncoderImpl : torch::nn::Module {
    explicit ContentEncoderImpl(const NetworkConfig& cfg);
    ContentFeature forward(const torch::Tensor& x);

    Geometry geometry;
    std::vector<torch::nn::Sequential> branches;
    torch::nn::Sequential trunk{nullptr};
};
TORCH_MODULE(ContentEncoder);

enum class DegradationSource { real_encoder, self_encoder };

struct DegradationCode {
    torch::Tensor vector;  // (N, C_d)
    DegradationSource source;
};

struct DegradationEncoderImpl : torch::nn::Module {
    explicit DegradationEncoderImpl(const NetworkConfig& cfg);
    torch::Tensor forward(const torch::Tensor& x);

    Geometry geometry;
    torch::nn::Sequential features{nullptr};
    torch::nn::Linear head{nullptr};
};
TORCH_MODULE(DegradationEncoder);

/// Upsamples a content map back to image geometry through AdaIN-modulated
/// layers whose (scale, bias) are predicted from the degradation code.
struct DecoderImpl : torch::nn::Module {
    explicit DecoderImpl(const NetworkConfig& cfg);
    torch::Tensor forward(const torch::Tensor& content_map, const torch::Tensor& degradation_code);

    /// Splits the mapping network's output into per-layer (scale, bias).
    std::vector<std::pair<torch::Tensor, torch::Tensor>> adain_params(const torch::Tensor& code);

    NetworkConfig cfg;
    std::vector<int> adain_channels;
    torch::nn::Sequential mapping{nullptr};
    torch::nn::Conv2d res_conv1{nullptr}, res_conv2{nullptr};
    torch::nn::Conv2d up1{nullptr}, up2{nullptr}, up3{nullptr}, out{nullptr};
};
TORCH_MODULE(Decoder);

struct PatchOutput {
    std::vector<torch::Tensor> maps;  // one (N, 1, h, w) logit map per scale
    torch::Tensor cue;                // (N, P): pooled penultimate features, averaged over scales
};

/// Multi-scale PatchGAN: scale s sees the input average-pooled by 2^s.
struct PatchDiscriminatorImpl : torch::nn::Module {
    PatchDiscriminatorImpl(const NetworkConfig& cfg, int penultimate_channels);
    PatchOutput forward(const torch::Tensor& x);

    Geometry geometry;
    std::vector<torch::nn::Sequential> bodies;
    std::vector<torch::nn::Conv2d> heads;
};
TORCH_MODULE(PatchDiscriminator);

struct DegradationScore {
    torch::Tensor score;  // (N): mean of all patch logits over all scales
    torch::Tensor cue;    // (N, C_cue)
    std::vector<torch::Tensor> maps;
};

struct IdentityOutput {
    torch::Tensor embedding;  // (N, C_s)
    torch::Tensor logits;     // (N, num_identities)
};

struct IdentityEncoderImpl : torch::nn::Module {
    explicit IdentityEncoderImpl(const NetworkConfig& cfg);
    IdentityOutput forward(const torch::Tensor& x);

    Geometry geometry;
    torch::nn::Sequential features{nullptr};
    torch::nn::Linear embed{nullptr};
    torch::nn::Linear classifier{nullptr};
};
TORCH_MODULE(IdentityEncoder);

/// Two linear layers and a sigmoid: degradation cue -> weights in (0, 1).
struct AttentionHeadImpl : torch::nn::Module {
    explicit AttentionHeadImpl(const NetworkConfig& cfg);
    torch::Tensor forward(const torch::Tensor& cue);

    torch::nn::Linear fc1{nullptr}, fc2{nullptr};
};
TORCH_MODULE(AttentionHead);

struct IdentityRepresentation {
    torch::Tensor f_inv;    // (N, C_c)
    torch::Tensor f_sen;    // (N, C_s)
    torch::Tensor weights;  // (N, C_s)
    torch::Tensor fused;    // (N, C_c + C_s) = [f_inv, f_sen * weights]
};

/// Fuses the two identity features; weights multiply f_sen elementwise.
IdentityRepresentation fuse_identity(torch::Tensor f_inv, torch::Tensor f_sen, torch::Tensor weights);

/// All learnable components, registered under the names used in checkpoints:
/// E_c, E_d, E_d_self, G, D_r, D_d, E_id, Att, cls_content, cls_inv, cls_sen,
/// cls_both.
struct NetworksImpl : torch::nn::Module {
    explicit NetworksImpl(const NetworkConfig& cfg);

    ContentFeature encode_content(const torch::Tensor& x);
    DegradationCode encode_degradation(const torch::Tensor& x, DegradationSource source);
    torch::Tensor decode(const torch::Tensor& content_map, const DegradationCode& code);
    std::vector<torch::Tensor> discriminate_reality(const torch::Tensor& x);
    DegradationScore degradation_score(const torch::Tensor& x);
    IdentityOutput encode_identity(const torch::Tensor& x);
    torch::Tensor attention_weights(const torch::Tensor& cue);
    /// With attention disabled the weights are all ones.
    IdentityRepresentation identity_representation(const torch::Tensor& x, bool attention_enabled = true);

    /// Parameters of the named sub-networks, in registration order.
    std::vector<torch::Tensor> parameters_of(std::initializer_list<std::string_view> names);

    NetworkConfig cfg;
    ContentEncoder content_encoder{nullptr};
    DegradationEncoder degradation_encoder{nullptr};
    DegradationEncoder self_degradation_encoder{nullptr};
    Decoder decoder{nullptr};
    PatchDiscriminator reality_discriminator{nullptr};
    PatchDiscriminator degradation_discriminator{nullptr};
    IdentityEncoder identity_encoder{nullptr};
    AttentionHead attention{nullptr};
    torch::nn::Linear content_classifier{nullptr};
    torch::nn::Linear inv_classifier{nullptr};
    torch::nn::Linear sen_classifier{nullptr};
    torch::nn::Linear both_classifier{nullptr};
};
TORCH_MODULE(Networks);

inline constexpr std::string_view kGeneratorGroups[] = {"E_c", "E_d", "E_d_self", "G", "cls_content"};

/// Throws ShapeError unless x is (N, 3, H, W) with the configured geometry.
void check_input(const torch::Tensor& x, const Geometry& geometry, const char* who);

}  // namespace direid
