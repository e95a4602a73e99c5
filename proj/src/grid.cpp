#include <mixnet/io.hpp>

#include <ostream>

namespace mixnet {

Matrix membership_grid(const MixtureModel& model, const GridBounds& bounds, Index resolution,
                       Index samples_s, Rng& rng) {
  if (model.target_dim() != 2)
    throw std::invalid_argument("grid export needs a model with a 2-D generator space");
  if (resolution < 2) throw std::invalid_argument("grid resolution must be >= 2");
  if (!(bounds.x_max > bounds.x_min) || !(bounds.y_max > bounds.y_min))
    throw std::invalid_argument("grid bounds are empty");

  const Index n = resolution * resolution;
  Matrix pts(n, 2);
  const double dx = (bounds.x_max - bounds.x_min) / static_cast<double>(resolution - 1);
  const double dy = (bounds.y_max - bounds.y_min) / static_cast<double>(resolution - 1);
  for (Index iy = 0; iy < resolution; ++iy)
    for (Index ix = 0; ix < resolution; ++ix)
      pts.row(iy * resolution + ix) << bounds.x_min + dx * static_cast<double>(ix),
          bounds.y_min + dy * static_cast<double>(iy);

  const Matrix m = model_memberships(model, pts, samples_s, rng);
  Matrix out(n, 2 + m.cols());
  out << pts, m;
  return out;
}

void export_grid(std::ostream& out, const MixtureModel& model, const GridBounds& bounds,
                 Index resolution, Index samples_s, Rng& rng) {
  const Matrix g = membership_grid(model, bounds, resolution, samples_s, rng);
  out << "x,y";
  for (int j = 1; j <= model.num_components(); ++j) out << ",m" << j;
  out << '\n';
  write_csv(out, g);
}

}  // namespace mixnet
