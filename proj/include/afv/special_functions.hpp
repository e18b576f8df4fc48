#pragma once

namespace afv::special {

double normal_cdf(double x);
double normal_sf(double x);
double normal_quantile(double p);

// Regularized lower/upper incomplete gamma P(a,x), Q(a,x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Regularized incomplete beta I_x(a,b).
double beta_inc(double a, double b, double x);

// Kolmogorov limiting survival function Q_KS(lambda) = P(K > lambda).
double kolmogorov_sf(double lambda);

// Two-sided Student-t tail probability P(|T| >= |t|) with nu degrees of freedom.
double student_t_two_sided(double t, double nu);

double chi_square_sf(double x, double dof);

}  // namespace afv::special
