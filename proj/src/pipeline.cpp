#include "dacal/pipeline.hpp"

#include <algorithm>

#include "dacal/error.hpp"
#include "dacal/preprocess.hpp"

namespace dacal {

std::string_view to_string(BaseKind kind) {
  switch (kind) {
    case BaseKind::none: return "none";
    case BaseKind::ts: return "ts";
    case BaseKind::ets: return "ets";
    case BaseKind::irm: return "irm";
    case BaseKind::ir: return "ir";
  }
  return "?";
}

MethodSpec MethodSpec::parse(std::string_view text) {
  MethodSpec spec;
  std::string_view base = text;
  const auto plus = text.find('+');
  if (plus != std::string_view::npos) {
    if (text.substr(plus + 1) != "dac") {
      throw ConfigError("method '" + std::string(text) + "': only '+dac' may follow the base");
    }
    base = text.substr(0, plus);
    spec.dac = true;
  }
  for (BaseKind kind : {BaseKind::none, BaseKind::ts, BaseKind::ets, BaseKind::irm, BaseKind::ir}) {
    if (base == to_string(kind)) {
      spec.base = kind;
      return spec;
    }
  }
  throw ConfigError("method '" + std::string(text) +
                    "': expected <base>[+dac] with base one of ts, ets, irm, ir, none");
}

std::string MethodSpec::str() const {
  std::string s(to_string(base));
  if (dac) s += "+dac";
  return s;
}

bool preserves_accuracy(BaseKind kind) { return kind != BaseKind::ir; }

namespace {

BaseModel fit_base(BaseKind kind, const DenseMatrix& logits, const LabelVector& labels) {
  switch (kind) {
    case BaseKind::none: return std::monostate{};
    case BaseKind::ts: return fit_ts(logits, labels);
    case BaseKind::ets: return fit_ets(logits, labels);
    case BaseKind::irm: return fit_irm(softmax_rows(logits), labels);
    case BaseKind::ir: return fit_ir(softmax_rows(logits), labels);
  }
  throw ConfigError("unknown base calibrator");
}

}  // namespace

DenseMatrix apply_base(const BaseModel& base, const DenseMatrix& logits) {
  struct Visitor {
    const DenseMatrix& z;
    DenseMatrix operator()(std::monostate) const { return softmax_rows(z); }
    DenseMatrix operator()(const TempScaler& m) const { return apply_ts(m, z); }
    DenseMatrix operator()(const EtsModel& m) const { return apply_ets(m, z); }
    DenseMatrix operator()(const IsotonicMap& m) const { return apply_irm(m, softmax_rows(z)); }
    DenseMatrix operator()(const OvaIsotonic& m) const { return apply_ir(m, softmax_rows(z)); }
  };
  return std::visit(Visitor{logits}, base);
}

CalibratorModel compose_with_densities(const MethodSpec& method, const CalibrationDataset& val,
                                       const DensityMatrix* densities,
                                       const ComposeOptions& options) {
  const LabelVector& labels = val.require_labels();
  CalibratorModel model;
  model.method = method;
  if (!method.dac) {
    model.base = fit_base(method.base, val.logits, labels);
    return model;
  }
  if (densities == nullptr) throw ConfigError("method '" + method.str() + "' needs densities");
  auto fit = fit_dac(val, *densities, options.dac);
  const DenseMatrix rescaled = rescale_logits(fit.model, val.logits, *densities);
  model.base = fit_base(method.base, rescaled, labels);
  model.dac = std::move(fit.model);
  model.dac_report = std::move(fit.report);
  return model;
}

CalibratorModel compose(const MethodSpec& method, const CalibrationDataset& val,
                        std::span<const KnnIndex> indices, const ComposeOptions& options) {
  if (!method.dac) return compose_with_densities(method, val, nullptr, options);
  if (indices.empty()) throw ConfigError("method '" + method.str() + "' needs kNN indices");
  const DensityMatrix densities = density_profile_for(val, indices);
  auto model = compose_with_densities(method, val, &densities, options);
  std::vector<std::string> sums;
  for (const auto& index : indices) sums.push_back(index.source_checksum());
  model.dac->set_index_checksums(std::move(sums));
  return model;
}

DenseMatrix predict_proba_with_densities(const CalibratorModel& model, const DenseMatrix& logits,
                                         const DensityMatrix* densities) {
  if (!model.dac) return apply_base(model.base, logits);
  if (densities == nullptr) throw ConfigError("model '" + model.method.str() + "' needs densities");
  return apply_base(model.base, rescale_logits(*model.dac, logits, *densities));
}

DenseMatrix predict_proba(const CalibratorModel& model, const CalibrationDataset& data,
                          std::span<const KnnIndex> indices) {
  if (!model.dac) return apply_base(model.base, data.logits);
  return apply_base(model.base, apply_dac(*model.dac, data, indices));
}

}  // namespace dacal
