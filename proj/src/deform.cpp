#include "tofsplat/deform.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace tofsplat {

void positional_encode(double v, int levels, double* out) {
    out[0] = v;
    double freq = M_PI;
    for (int l = 0; l < levels; ++l, freq *= 2.0) {
        out[1 + 2 * l] = std::sin(freq * v);
        out[2 + 2 * l] = std::cos(freq * v);
    }
}

void positional_encode_derivative(double v, int levels, double* out) {
    out[0] = 1.0;
    double freq = M_PI;
    for (int l = 0; l < levels; ++l, freq *= 2.0) {
        out[1 + 2 * l] = freq * std::cos(freq * v);
        out[2 + 2 * l] = -freq * std::sin(freq * v);
    }
}

DeformNet::DeformNet(const DeformConfig& cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg.hidden_layers < 0 || cfg.width <= 0 || cfg.l_x < 0 || cfg.l_t < 0 ||
        cfg.coord_scale <= 0.0)
        throw std::runtime_error("DeformNet: invalid config");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto xavier = [&](int rows, int cols) {
        const double std_dev = std::sqrt(2.0 / (rows + cols));
        Eigen::MatrixXd m(rows, cols);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) m(i, j) = std_dev * normal(rng);
        return m;
    };

    const int in = input_dim();
    int prev = in;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
        W_.push_back(xavier(cfg.width, prev));
        b_.push_back(Eigen::VectorXd::Zero(cfg.width));
        prev = cfg.width;
    }
    Eigen::MatrixXd last(3, prev);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < prev; ++j) last(i, j) = cfg.final_std * normal(rng);
    W_.push_back(last);
    b_.push_back(Eigen::VectorXd::Zero(3));
}

int DeformNet::input_dim() const {
    return 3 * encoding_size(cfg_.l_x) + encoding_size(cfg_.l_t);
}

void DeformNet::encode_batch(const Eigen::Matrix3Xd& scaled, double t,
                             Eigen::MatrixXd& out) const {
    const int n = static_cast<int>(scaled.cols());
    const int ex = encoding_size(cfg_.l_x);
    const int et = encoding_size(cfg_.l_t);
    out.resize(input_dim(), n);

    std::vector<double> enc_t(et);
    positional_encode(t, cfg_.l_t, enc_t.data());
    std::vector<double> enc(ex);
    for (int i = 0; i < n; ++i) {
        double* col = out.col(i).data();
        for (int c = 0; c < 3; ++c) {
            positional_encode(scaled(c, i), cfg_.l_x, enc.data());
            std::copy(enc.begin(), enc.end(), col + c * ex);
        }
        std::copy(enc_t.begin(), enc_t.end(), col + 3 * ex);
    }
}

Eigen::Matrix3Xd DeformNet::offsets(const Eigen::Matrix3Xd& positions, double t,
                                    Cache* cache) const {
    if (W_.empty()) throw std::runtime_error("DeformNet: uninitialized");
    const Eigen::Matrix3Xd scaled = positions / cfg_.coord_scale;

    Eigen::MatrixXd x;
    encode_batch(scaled, t, x);

    Cache local;
    Cache& c = cache ? *cache : local;
    c.input = x;
    c.scaled_positions = scaled;
    c.h.clear();
    c.h.reserve(cfg_.hidden_layers);

    const Eigen::MatrixXd* prev = &c.input;
    for (int l = 0; l < cfg_.hidden_layers; ++l) {
        Eigen::MatrixXd a = (W_[l] * (*prev)).colwise() + b_[l];
        c.h.push_back(a.cwiseMax(0.0));
        prev = &c.h.back();
    }
    return ((W_.back() * (*prev)).colwise() + b_.back());
}

void DeformNet::Grads::init_like(const DeformNet& net) {
    dW.clear();
    db.clear();
    for (int l = 0; l < net.layer_count(); ++l) {
        dW.push_back(Eigen::MatrixXd::Zero(net.W_[l].rows(), net.W_[l].cols()));
        db.push_back(Eigen::VectorXd::Zero(net.b_[l].size()));
    }
}

void DeformNet::Grads::add_flat_to(Eigen::VectorXd& flat) const {
    Eigen::Index k = 0;
    for (size_t l = 0; l < dW.size(); ++l) {
        for (Eigen::Index i = 0; i < dW[l].rows(); ++i)
            for (Eigen::Index j = 0; j < dW[l].cols(); ++j) flat[k++] += dW[l](i, j);
        for (Eigen::Index i = 0; i < db[l].size(); ++i) flat[k++] += db[l][i];
    }
}

void DeformNet::backward(const Cache& cache, const Eigen::Matrix3Xd& d_offsets, Grads& grads,
                         Eigen::Matrix3Xd* d_positions) const {
    const int n = static_cast<int>(d_offsets.cols());
    const int layers = layer_count();
    if (static_cast<int>(grads.dW.size()) != layers) grads.init_like(*this);

    Eigen::MatrixXd delta = d_offsets;  // gradient flowing into the current layer output
    for (int l = layers - 1; l >= 0; --l) {
        const Eigen::MatrixXd& below = (l == 0) ? cache.input : cache.h[l - 1];
        grads.dW[l].noalias() += delta * below.transpose();
        grads.db[l] += delta.rowwise().sum();
        if (l == 0) {
            if (d_positions) {
                const Eigen::MatrixXd d_input = W_[0].transpose() * delta;
                // Chain through the position encoding blocks (time is fixed).
                const int ex = encoding_size(cfg_.l_x);
                d_positions->resize(3, n);
                std::vector<double> der(ex);
                for (int i = 0; i < n; ++i) {
                    for (int c = 0; c < 3; ++c) {
                        positional_encode_derivative(cache.scaled_positions(c, i), cfg_.l_x,
                                                     der.data());
                        double acc = 0.0;
                        const double* din = d_input.col(i).data() + c * ex;
                        for (int k = 0; k < ex; ++k) acc += der[k] * din[k];
                        (*d_positions)(c, i) = acc / cfg_.coord_scale;
                    }
                }
            }
            break;
        }
        Eigen::MatrixXd d_below = W_[l].transpose() * delta;
        // ReLU gate: activations are zero exactly where the gate is closed.
        delta = d_below.cwiseProduct(
            (cache.h[l - 1].array() > 0.0).cast<double>().matrix());
    }
}

int DeformNet::parameter_count() const {
    int n = 0;
    for (size_t l = 0; l < W_.size(); ++l)
        n += static_cast<int>(W_[l].size() + b_[l].size());
    return n;
}

void DeformNet::get_parameters(Eigen::VectorXd& flat) const {
    flat.resize(parameter_count());
    Eigen::Index k = 0;
    for (size_t l = 0; l < W_.size(); ++l) {
        for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
            for (Eigen::Index j = 0; j < W_[l].cols(); ++j) flat[k++] = W_[l](i, j);
        for (Eigen::Index i = 0; i < b_[l].size(); ++i) flat[k++] = b_[l][i];
    }
}

void DeformNet::set_parameters(const Eigen::VectorXd& flat) {
    if (flat.size() != parameter_count())
        throw std::runtime_error("DeformNet::set_parameters: size mismatch");
    Eigen::Index k = 0;
    for (size_t l = 0; l < W_.size(); ++l) {
        for (Eigen::Index i = 0; i < W_[l].rows(); ++i)
            for (Eigen::Index j = 0; j < W_[l].cols(); ++j) W_[l](i, j) = flat[k++];
        for (Eigen::Index i = 0; i < b_[l].size(); ++i) b_[l][i] = flat[k++];
    }
}

void DeformNet::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("DeformNet::save: cannot open " + path);
    out.precision(17);
    out << "tofsplat_deform 1\n"
        << "hidden_layers " << cfg_.hidden_layers << "\n"
        << "width " << cfg_.width << "\n"
        << "l_x " << cfg_.l_x << "\n"
        << "l_t " << cfg_.l_t << "\n"
        << "coord_scale " << cfg_.coord_scale << "\n"
        << "parameters " << parameter_count() << "\n"
        << "data\n";
    Eigen::VectorXd flat;
    get_parameters(flat);
    std::vector<float> buf(flat.size());
    for (Eigen::Index i = 0; i < flat.size(); ++i) buf[i] = static_cast<float>(flat[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("DeformNet::save: write failed for " + path);
}

DeformNet DeformNet::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("DeformNet::load: cannot open " + path);
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != "tofsplat_deform" || version != 1)
        throw std::runtime_error("DeformNet::load: bad header in " + path);

    DeformConfig cfg;
    int param_count = 0;
    std::string key;
    while (in >> key) {
        if (key == "data") break;
        std::string value;
        if (!(in >> value)) throw std::runtime_error("DeformNet::load: malformed header");
        if (key == "hidden_layers") cfg.hidden_layers = std::stoi(value);
        else if (key == "width") cfg.width = std::stoi(value);
        else if (key == "l_x") cfg.l_x = std::stoi(value);
        else if (key == "l_t") cfg.l_t = std::stoi(value);
        else if (key == "coord_scale") cfg.coord_scale = std::stod(value);
        else if (key == "parameters") param_count = std::stoi(value);
        else throw std::runtime_error("DeformNet::load: unknown field '" + key + "'");
    }
    in.get();

    DeformNet net(cfg, 0);
    if (param_count != net.parameter_count())
        throw std::runtime_error("DeformNet::load: parameter count mismatch");
    std::vector<float> buf(param_count);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw std::runtime_error("DeformNet::load: truncated parameter block");
    Eigen::VectorXd flat(param_count);
    for (int i = 0; i < param_count; ++i) flat[i] = buf[i];
    net.set_parameters(flat);
    return net;
}

Eigen::Matrix3Xd interp_positions(const Eigen::Matrix3Xd& x_i1, const Eigen::Matrix3Xd& x_i2,
                                  double i1, double i2, double j) {
    return (i2 - j) * x_i1 + (j - i1) * x_i2;
}

}  // namespace tofsplat
