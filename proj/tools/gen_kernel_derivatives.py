#!/usr/bin/env python3
"""Emit closed-form y/t derivatives of the model kernels as C++.

K(x,t;y) = t^(-1/2) exp(-(x-y-a t)^2 / 4t), written in the comoving variable
xi = x - y - a t, and the excited factor errfn((-y - a t) / (2 sqrt t)) with
errfn(z) = (1/2pi) int_{-inf}^z exp(-s^2) ds.

Usage: python3 tools/gen_kernel_derivatives.py > src/generated/kernel_derivatives.inc
"""
import sympy as sp

MAX_ALPHA = 4
MAX_BETA = 4

x, y, t, a, xi = sp.symbols("x y t a xi", real=True)
tp = sp.Symbol("t", positive=True)


def body(expr, extra_subs):
    expr = expr.subs(extra_subs)
    expr = sp.simplify(expr)
    reps, (red,) = sp.cse([expr], symbols=sp.numbered_symbols("c"))
    lines = [f"        const double {s} = {sp.ccode(e)};" for s, e in reps]
    lines.append(f"        return {sp.ccode(red)};")
    return "\n".join(lines)


def main():
    K = t ** sp.Rational(-1, 2) * sp.exp(-((x - y - a * t) ** 2) / (4 * t))
    z = (-y - a * t) / (2 * sp.sqrt(t))
    errfn = (sp.sqrt(sp.pi) / 2 * (1 + sp.erf(z))) / (2 * sp.pi)

    out = ["// Generated by tools/gen_kernel_derivatives.py. Do not edit by hand.", ""]
    out.append("inline double model_k_derivative(int alpha, int beta, double xi, double t, double a) {")
    out.append("    switch (alpha * 16 + beta) {")
    for al in range(MAX_ALPHA + 1):
        for be in range(MAX_BETA + 1):
            d = sp.diff(K, y, al, t, be) if (al or be) else K
            # evaluate at y = 0 with x = xi + a t so the expression depends on xi only
            d = d.subs(y, 0).subs(x, xi + a * t)
            out.append(f"    case {al * 16 + be}: {{")
            out.append(body(d, {}))
            out.append("    }")
    out.append("    default: return 0.0;")
    out.append("    }")
    out.append("}")
    out.append("")
    out.append("inline double model_errfn_derivative(int alpha, int beta, double y, double t, double a) {")
    out.append("    switch (alpha * 16 + beta) {")
    for al in range(MAX_ALPHA + 1):
        for be in range(MAX_BETA + 1):
            d = sp.diff(errfn, y, al, t, be) if (al or be) else errfn
            out.append(f"    case {al * 16 + be}: {{")
            out.append(body(d, {}))
            out.append("    }")
    out.append("    default: return 0.0;")
    out.append("    }")
    out.append("}")
    print("\n".join(out))


if __name__ == "__main__":
    main()
