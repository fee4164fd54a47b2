#pragma once

namespace fpce {

double digamma(double x);
double trigamma(double x);

double log_beta(double a, double b);

// Regularized incomplete beta function I_x(a,b).
double inc_beta(double a, double b, double x);

// Inverse of inc_beta in x for fixed (a,b). p in [0,1].
double inc_beta_inv(double a, double b, double p);

}  // namespace fpce
