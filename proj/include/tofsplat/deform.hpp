#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace tofsplat {

/// Frequency encoding: raw value followed by sin/cos pairs at L octaves,
/// gamma(v) = [v, sin(2^0 pi v), cos(2^0 pi v), ..., sin(2^{L-1} pi v), ...].
inline int encoding_size(int levels) { return 1 + 2 * levels; }
void positional_encode(double v, int levels, double* out);
void positional_encode_derivative(double v, int levels, double* out);

struct DeformConfig {
    int hidden_layers = 4;   // number of ReLU layers (8 at full scale)
    int width = 128;         // units per hidden layer (256 at full scale)
    int l_x = 10;            // octaves for each position component
    int l_t = 10;            // octaves for the time input
    double coord_scale = 1.0;  // positions are divided by this before encoding
    double final_std = 1e-5;   // init std of the output layer
};

/// MLP mapping (canonical position, time) -> position offset. Hidden layers
/// use ReLU; weights are Xavier-normal with zero biases, and the output layer
/// starts near zero so the net initially represents the identity deformation.
class DeformNet {
public:
    DeformNet() = default;
    DeformNet(const DeformConfig& cfg, uint64_t seed);

    const DeformConfig& config() const { return cfg_; }
    int input_dim() const;
    int layer_count() const { return static_cast<int>(W_.size()); }

    struct Cache {
        Eigen::MatrixXd input;              // input_dim x N
        std::vector<Eigen::MatrixXd> h;     // post-ReLU activations per hidden layer
        Eigen::Matrix3Xd scaled_positions;  // positions / coord_scale
    };

    /// Offsets for a batch of canonical positions at normalized time t.
    Eigen::Matrix3Xd offsets(const Eigen::Matrix3Xd& positions, double t,
                             Cache* cache = nullptr) const;

    struct Grads {
        std::vector<Eigen::MatrixXd> dW;
        std::vector<Eigen::VectorXd> db;
        void init_like(const DeformNet& net);
        void add_flat_to(Eigen::VectorXd& flat) const;
    };

    /// Accumulates parameter gradients for one cached forward pass; optionally
    /// adds the gradient w.r.t. the (unscaled) input positions.
    void backward(const Cache& cache, const Eigen::Matrix3Xd& d_offsets, Grads& grads,
                  Eigen::Matrix3Xd* d_positions = nullptr) const;

    int parameter_count() const;
    void get_parameters(Eigen::VectorXd& flat) const;
    void set_parameters(const Eigen::VectorXd& flat);

    void save(const std::string& path) const;
    static DeformNet load(const std::string& path);

private:
    DeformConfig cfg_;
    std::vector<Eigen::MatrixXd> W_;  // [0]: width x in, hidden: width x width, last: 3 x width
    std::vector<Eigen::VectorXd> b_;

    void encode_batch(const Eigen::Matrix3Xd& scaled, double t, Eigen::MatrixXd& out) const;
};

/// Piecewise-linear position interpolation between two integer timesteps:
/// x_j = (i2 - j) x_{i1} + (j - i1) x_{i2} with i1 = floor(j), i2 = i1 + 1.
Eigen::Matrix3Xd interp_positions(const Eigen::Matrix3Xd& x_i1, const Eigen::Matrix3Xd& x_i2,
                                  double i1, double i2, double j);

}  // namespace tofsplat
