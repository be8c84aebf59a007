"""Verify the autodiff engine against finite differences.

Every differentiable op is compared to a central-difference estimate on
random inputs; the spike nonlinearity is instead compared exactly against
its closed-form surrogate derivative, since its forward pass is a step
function and finite differences do not apply.

Run from the repository root:

    python3 demos/gradient_check.py
"""

from tksnn.gradcheck import run_suite


def main():
    worst = run_suite(range(5))
    width = max(len(name) for name in worst)
    for name in sorted(worst):
        print(f"{name:<{width}}  {worst[name]:.3e}")
    print(f"\nmax relative error: {max(worst.values()):.3e} (threshold 1e-3)")


if __name__ == "__main__":
    main()
