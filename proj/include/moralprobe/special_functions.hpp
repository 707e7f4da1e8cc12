#pragma once

namespace moralprobe::special {

/// Regularized incomplete beta I_x(a, b), a, b > 0, x in [0, 1].
double incomplete_beta(double a, double b, double x);

/// Two-sided tail probability of Student's t with `df` degrees of freedom.
double student_t_two_sided_p(double t, double df);

/// Survival function of the chi-square distribution with one degree of freedom.
double chi2_sf_df1(double x);

}  // namespace moralprobe::special
