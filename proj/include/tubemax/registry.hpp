#pragma once

// Model construction by name, including user-defined models given as
// expressions in a JSON document.

#include "tubemax/error.hpp"
#include "tubemax/expression.hpp"
#include "tubemax/model.hpp"
#include "tubemax/models.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace tubemax {

/// phi and sigma given as expressions in t1..td and named parameters. With
/// normalize set, phi is divided by its norm. Derivatives are differenced.
class CustomModel final : public ManifoldModel {
public:
    explicit CustomModel(const nlohmann::json& j) {
        static const std::set<std::string> keys{"name", "dim", "box", "phi", "sigma", "params", "normalize", "maximizer"};
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!keys.count(it.key())) throw ConfigError("custom model: unknown key '" + it.key() + "'");
        for (const char* k : {"dim", "box", "phi", "sigma"})
            if (!j.contains(k)) throw ConfigError(std::string("custom model: missing '") + k + "'");
        name_ = j.value("name", std::string("custom"));
        d_ = j.at("dim").get<int>();
        if (d_ < 0) throw ConfigError("custom model: dim must be >= 0");
        std::map<std::string, double> params;
        if (j.contains("params")) params = j.at("params").get<std::map<std::string, double>>();
        params_ = params;
        std::vector<std::string> vars;
        for (int i = 1; i <= d_; ++i) vars.push_back("t" + std::to_string(i));
        auto number = [&](const nlohmann::json& v) {
            if (v.is_number()) return v.get<double>();
            if (v.is_string()) return Expression(v.get<std::string>(), {}, params)(nullptr);
            throw ConfigError("custom model: expected a number or expression");
        };
        const auto& box = j.at("box");
        if (!box.is_array() || static_cast<int>(box.size()) != d_) throw ConfigError("custom model: box needs dim entries");
        for (const auto& ax : box) {
            Axis a;
            if (ax.is_array() && (ax.size() == 2 || ax.size() == 3)) {
                a.lo = number(ax[0]);
                a.hi = number(ax[1]);
                a.periodic = ax.size() == 3 && ax[2].get<bool>();
            } else if (ax.is_object()) {
                a.lo = number(ax.at("lo"));
                a.hi = number(ax.at("hi"));
                a.periodic = ax.value("periodic", false);
            } else {
                throw ConfigError("custom model: axis must be [lo, hi(, periodic)] or {lo, hi, periodic}");
            }
            if (!(a.hi > a.lo)) throw ConfigError("custom model: axis needs hi > lo");
            box_.push_back(a);
        }
        for (const auto& e : j.at("phi")) phi_.emplace_back(e.get<std::string>(), vars, params);
        if (phi_.size() < 2) throw ConfigError("custom model: phi needs at least two components");
        sigma_.emplace(j.at("sigma").get<std::string>(), vars, params);
        normalize_ = j.value("normalize", false);
        if (j.contains("maximizer")) {
            const auto& m = j.at("maximizer");
            MaximizerManifold mm;
            mm.d0 = m.at("d0").get<int>();
            for (const auto& p : m.at("points")) {
                const auto t = p.at("t").get<std::vector<double>>();
                if (static_cast<int>(t.size()) != d_) throw ConfigError("custom model: maximizer point has wrong dimension");
                mm.points.push_back(WeightedPoint{Eigen::Map<const Vector>(t.data(), d_), p.value("weight", 1.0)});
            }
            if (mm.points.empty()) throw ConfigError("custom model: maximizer needs points");
            maximizer_ = mm;
        }
    }

    std::string name() const override { return name_; }
    int dim() const override { return d_; }
    int ambient_dim() const override { return static_cast<int>(phi_.size()); }
    std::vector<Axis> box() const override { return box_; }
    Vector phi(const Vector& t) const override {
        Vector u(ambient_dim());
        for (int i = 0; i < u.size(); ++i) u[i] = phi_[static_cast<std::size_t>(i)](t.data());
        return normalize_ ? Vector(u / u.norm()) : u;
    }
    double sigma(const Vector& t) const override { return (*sigma_)(t.data()); }
    std::map<std::string, double> parameters() const override { return params_; }
    std::optional<MaximizerManifold> maximizer() const override { return maximizer_; }

private:
    std::string name_;
    int d_ = 0;
    std::vector<Axis> box_;
    std::vector<Expression> phi_;
    std::optional<Expression> sigma_;
    std::map<std::string, double> params_;
    bool normalize_ = false;
    std::optional<MaximizerManifold> maximizer_;
};

struct ModelSpec {
    std::string name = "circle";
    double m = 0.0;
    double l1 = 1.0, l2 = 1.0;
    int nu = 4;
    int p = 0;  // checked against lambdas when set
    int q = 0;  // 0 = multiplicity of lambda_1
    std::vector<double> lambdas;
    int n = 0;  // ambient dimension; checked when set, chosen for "point"
    double sigma0 = 1.0;
    nlohmann::json custom;
};

inline const std::vector<std::string>& model_names() {
    static const std::vector<std::string> names{"circle", "wishart2", "wishartpq", "custom",
                                                "torus", "great-sphere", "point"};
    return names;
}

inline std::shared_ptr<const ManifoldModel> make_model(const ModelSpec& s) {
    std::shared_ptr<const ManifoldModel> model;
    if (s.name == "circle") {
        model = std::make_shared<CircleModel>(s.m);
    } else if (s.name == "wishart2") {
        model = std::make_shared<Wishart2Model>(s.l1, s.l2, s.nu);
    } else if (s.name == "wishartpq") {
        if (s.lambdas.empty()) throw ConfigError("wishartpq: --lambdas is required");
        if (s.p != 0 && s.p != static_cast<int>(s.lambdas.size())) {
            throw ConfigError("wishartpq: --p disagrees with the number of lambdas");
        }
        model = std::make_shared<WishartPQModel>(s.lambdas, s.nu, s.q);
    } else if (s.name == "custom") {
        if (s.custom.is_null()) throw ConfigError("custom model: needs a 'custom' object in the config file");
        model = std::make_shared<CustomModel>(s.custom);
    } else if (s.name == "torus") {
        model = std::make_shared<TorusModel>(s.sigma0);
    } else if (s.name == "great-sphere") {
        model = std::make_shared<GreatSphereModel>();
    } else if (s.name == "point") {
        model = std::make_shared<PointModel>(s.n > 0 ? s.n : 3, s.sigma0);
    } else {
        std::string known;
        for (const auto& n : model_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown model '" + s.name + "' (known: " + known + ")");
    }
    if (s.n > 0 && model->ambient_dim() != s.n) {
        throw ConfigError(s.name + ": --n " + std::to_string(s.n) + " but the model has n = " +
                          std::to_string(model->ambient_dim()));
    }
    check_model_shape(*model, false);
    return model;
}

}  // namespace tubemax
