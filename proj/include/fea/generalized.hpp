// Generalized-coordinate machinery: derivative stacks, the temporal shift
// operator D, smoothness precision matrices for colored noise, and
// Kronecker assembly of generalized noise precisions.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace fea {

// A signal together with its first p temporal derivatives, stacked as
// [x, x', x'', ...] with blocks of size base_dim. Order and base_dim are
// fixed at construction; instances are plain values.
class GeneralizedVector {
public:
    GeneralizedVector(int base_dim, int order)
        : base_dim_(base_dim), order_(order),
          data_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(base_dim) * (order + 1))) {
        if (base_dim < 1) throw std::invalid_argument("GeneralizedVector: base_dim must be >= 1");
        if (order < 0) throw std::invalid_argument("GeneralizedVector: order must be >= 0");
    }

    GeneralizedVector(int base_dim, int order, Eigen::VectorXd data)
        : GeneralizedVector(base_dim, order) {
        if (data.size() != data_.size()) {
            std::ostringstream msg;
            msg << "GeneralizedVector: data length " << data.size()
                << " != base_dim*(order+1) = " << data_.size();
            throw std::invalid_argument(msg.str());
        }
        data_ = std::move(data);
    }

    int base_dim() const { return base_dim_; }
    int order() const { return order_; }
    Eigen::Index size() const { return data_.size(); }

    const Eigen::VectorXd& flat() const { return data_; }

    // k-th derivative block, k in [0, order].
    Eigen::VectorXd block(int k) const {
        check_order(k);
        return data_.segment(static_cast<Eigen::Index>(k) * base_dim_, base_dim_);
    }

    void set_block(int k, const Eigen::VectorXd& value) {
        check_order(k);
        if (value.size() != base_dim_)
            throw std::invalid_argument("GeneralizedVector::set_block: block size mismatch");
        data_.segment(static_cast<Eigen::Index>(k) * base_dim_, base_dim_) = value;
    }

    GeneralizedVector operator+(const GeneralizedVector& other) const {
        check_same_shape(other);
        return {base_dim_, order_, data_ + other.data_};
    }
    GeneralizedVector operator-(const GeneralizedVector& other) const {
        check_same_shape(other);
        return {base_dim_, order_, data_ - other.data_};
    }
    GeneralizedVector operator*(double s) const { return {base_dim_, order_, data_ * s}; }

private:
    void check_order(int k) const {
        if (k < 0 || k > order_) throw std::out_of_range("GeneralizedVector: block index out of range");
    }
    void check_same_shape(const GeneralizedVector& other) const {
        if (other.base_dim_ != base_dim_ || other.order_ != order_)
            throw std::invalid_argument("GeneralizedVector: shape mismatch");
    }

    int base_dim_;
    int order_;
    Eigen::VectorXd data_;
};

// Width of the Gaussian autocorrelation kernel assumed for a noise stream,
// together with the derivative order the smoothness matrix is built for.
struct SmoothnessKernel {
    double sigma = 1.0;  // kernel width, time units
    int order = 0;

    void validate() const {
        if (!(sigma > 0.0)) throw std::invalid_argument("SmoothnessKernel: sigma must be > 0");
        if (order < 0) throw std::invalid_argument("SmoothnessKernel: order must be >= 0");
    }
};

// Symmetric positive-semidefinite precision over a derivative stack
// (e.g. S(sigma^2) (x) Pi for process or observation noise).
class GeneralizedPrecision {
public:
    static constexpr double kSymmetryTol = 1e-10;

    explicit GeneralizedPrecision(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
        if (matrix_.rows() != matrix_.cols())
            throw std::invalid_argument("GeneralizedPrecision: matrix must be square");
        const double scale = std::max(1.0, matrix_.cwiseAbs().maxCoeff());
        if (((matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff()) > kSymmetryTol * scale)
            throw std::invalid_argument("GeneralizedPrecision: matrix not symmetric");
        // PSD check via LDLT pivots (allows semidefinite curvatures).
        Eigen::LDLT<Eigen::MatrixXd> ldlt(0.5 * (matrix_ + matrix_.transpose()));
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() < -1e-9 * scale).any())
            throw std::invalid_argument("GeneralizedPrecision: matrix not positive semidefinite");
    }

    const Eigen::MatrixXd& matrix() const { return matrix_; }
    Eigen::Index size() const { return matrix_.rows(); }

private:
    Eigen::MatrixXd matrix_;
};

// D operator: block k of the output is block k+1 of the input, highest
// block maps to zero. Nilpotent of index order+1.
inline GeneralizedVector shift(const GeneralizedVector& v) {
    GeneralizedVector out(v.base_dim(), v.order());
    for (int k = 0; k + 1 <= v.order(); ++k) out.set_block(k, v.block(k + 1));
    return out;
}

// Matrix form of the shift operator on an (order+1)-block stack of width n.
inline Eigen::MatrixXd shift_matrix(int base_dim, int order) {
    const Eigen::Index n = base_dim, m = n * (order + 1);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m, m);
    for (int k = 0; k + 1 <= order; ++k)
        d.block(k * n, (k + 1) * n, n, n).setIdentity();
    return d;
}

// Backward finite-difference embedding of the last p+1 samples into a
// derivative stack at the most recent sample:
//   d^k y / dt^k  ~=  dt^-k * sum_i (-1)^i C(k,i) y[last-i]
// Exact for polynomial signals up to degree k.
inline GeneralizedVector embed_taylor(const std::vector<Eigen::VectorXd>& samples,
                                      double dt, int order) {
    if (order < 0) throw std::invalid_argument("embed_taylor: order must be >= 0");
    if (!(dt > 0.0)) throw std::invalid_argument("embed_taylor: dt must be > 0");
    if (static_cast<int>(samples.size()) < order + 1) {
        std::ostringstream msg;
        msg << "embed_taylor: need at least " << order + 1 << " samples, got " << samples.size();
        throw std::invalid_argument(msg.str());
    }
    const int n = static_cast<int>(samples.back().size());
    const std::size_t last = samples.size() - 1;
    GeneralizedVector out(n, order);
    for (int k = 0; k <= order; ++k) {
        Eigen::VectorXd diff = Eigen::VectorXd::Zero(n);
        double binom = 1.0;  // C(k, i), updated incrementally
        for (int i = 0; i <= k; ++i) {
            const Eigen::VectorXd& s = samples[last - i];
            if (s.size() != n) throw std::invalid_argument("embed_taylor: inconsistent sample dims");
            diff += ((i % 2 == 0) ? binom : -binom) * s;
            binom = binom * (k - i) / (i + 1);
        }
        out.set_block(k, diff / std::pow(dt, k));
    }
    return out;
}

// Covariance between derivative orders of a stationary process whose
// autocorrelation is rho(h) = exp(-h^2 / (4 sigma^2)):
//   M[i][j] = (-1)^j rho^(i+j)(0),   zero for odd i+j,
//   rho^(2m)(0) = (2m)! (-1)^m / (m! (4 sigma^2)^m).
// Reproduces the order-2 entries 1, 1/(2s^2), -1/(2s^2), 3/(4s^4) and
// extends to arbitrary order.
inline Eigen::MatrixXd smoothness_covariance(const SmoothnessKernel& kernel) {
    kernel.validate();
    const int p = kernel.order;
    const double a = 1.0 / (4.0 * kernel.sigma * kernel.sigma);
    // rho^(2m)(0) for m = 0 .. p
    std::vector<double> rho_even(p + 1);
    double fact_ratio = 1.0;  // (2m)! / m!
    double a_pow = 1.0;       // a^m
    for (int m = 0; m <= p; ++m) {
        if (m > 0) {
            fact_ratio *= (2.0 * m) * (2.0 * m - 1.0) / m;
            a_pow *= a;
        }
        rho_even[m] = ((m % 2 == 0) ? 1.0 : -1.0) * fact_ratio * a_pow;
    }
    Eigen::MatrixXd m_mat = Eigen::MatrixXd::Zero(p + 1, p + 1);
    for (int i = 0; i <= p; ++i)
        for (int j = 0; j <= p; ++j) {
            if ((i + j) % 2 != 0) continue;
            const double d = rho_even[(i + j) / 2];
            m_mat(i, j) = ((j % 2 == 0) ? d : -d);
        }
    return m_mat;
}

// S(sigma^2) = M^-1: precision across derivative orders of a smooth noise
// stream. Symmetric positive definite for sigma > 0 and moderate order.
inline Eigen::MatrixXd smoothness_precision(const SmoothnessKernel& kernel) {
    const Eigen::MatrixXd m_mat = smoothness_covariance(kernel);
    Eigen::LLT<Eigen::MatrixXd> llt(m_mat);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("smoothness_precision: derivative covariance numerically singular");
    Eigen::MatrixXd s = llt.solve(Eigen::MatrixXd::Identity(m_mat.rows(), m_mat.cols()));
    return 0.5 * (s + s.transpose());
}

inline Eigen::MatrixXd kronecker(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Generalized noise precision S (x) Pi: smoothness coupling across orders,
// spatial precision within each order.
inline GeneralizedPrecision generalized_precision(const Eigen::MatrixXd& smoothness,
                                                  const Eigen::MatrixXd& precision) {
    if (smoothness.rows() != smoothness.cols())
        throw std::invalid_argument("generalized_precision: smoothness matrix must be square");
    if (precision.rows() != precision.cols())
        throw std::invalid_argument("generalized_precision: precision matrix must be square");
    return GeneralizedPrecision(kronecker(smoothness, precision));
}

}  // namespace fea
