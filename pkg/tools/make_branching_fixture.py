"""Regenerate the packaged Rb-87 D1 effective branching table.

Works in the uncoupled |m_J, m_I> basis: every hyperfine sublevel is expanded
with sympy Clebsch-Gordan coefficients and the electric-dipole operator acts
on the electron spin only.  The package computes the same table from Wigner
3j/6j symbols, so the two routes are independent.

    python tools/make_branching_fixture.py > src/cptsim/data/branching_d1.txt
"""
from sympy import Rational, S
from sympy.physics.quantum.cg import CG

I_NUC = Rational(3, 2)
J = S.Half


def hyperfine_state(F, mF):
    """|F mF> as {(mJ, mI): amplitude}."""
    state = {}
    for mJ in (-J, J):
        mI = mF - mJ
        if abs(mI) > I_NUC:
            continue
        c = CG(J, mJ, I_NUC, mI, F, mF).doit()
        if c != 0:
            state[(mJ, mI)] = c
    return state


def electron_dipole(mJg, mJe, q):
    # <J mJg | d_q | J' mJe> up to a common reduced element
    return CG(J, mJe, 1, q, J, mJg).doit() if mJg == mJe + q else S.Zero


def strength(ground, excited):
    total = S.Zero
    for q in (-1, 0, 1):
        amp = S.Zero
        for (mJg, mIg), cg in ground.items():
            for (mJe, mIe), ce in excited.items():
                if mIg == mIe:
                    amp += cg * ce * electron_dipole(mJg, mJe, q)
        total += amp**2
    return total


def main():
    grounds = [(F, m) for F in (1, 2) for m in range(-F, F + 1)]
    excited = [(F, m) for F in (1, 2) for m in range(-F, F + 1)]

    def ground_group(F, m):
        if m == 0:
            return 0 if F == 1 else 1
        return 2

    groups = {
        "CptExcited": [(2, 1)],
        "PiExcited": [(F, m) for F, m in excited if m != 0 and (F, m) != (2, 1)],
        "OffRes1": [(1, 0)],
        "OffRes2": [(2, 0)],
    }
    gstates = {g: hyperfine_state(*g) for g in grounds}
    print("# Rb-87 D1 effective branching ratios b[excited][ground]")
    print("# rows: excited effective level; columns: ground effective level")
    print("excited Clock1 Clock2 Trap")
    for name, members in groups.items():
        row = [S.Zero, S.Zero, S.Zero]
        for e in members:
            es = hyperfine_state(*e)
            strengths = {g: strength(gstates[g], es) for g in grounds}
            norm = sum(strengths.values())
            for g, s in strengths.items():
                row[ground_group(*g)] += s / norm
        row = [r / len(members) for r in row]
        print(name + " " + " ".join(f"{float(r):.7g}" for r in row))


if __name__ == "__main__":
    main()
