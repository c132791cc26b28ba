"""Generate the two bundled example models (run once; outputs are committed).

Both are zero-order-hold discretizations of damped mechanical systems with
full state measurement.  The attack channels follow the usual redundancy
pattern: some actuator channels (columns copied from B) plus some sensor
channels (columns of the identity in Psi).

Usage: python scripts/generate_models.py
"""

import pathlib
import sys

import numpy as np
from scipy.linalg import expm

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from cpsattack.plant import SystemModel, save_model, validate  # noqa: E402

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "cpsattack" / "models"


def zoh(Ac, Bc, dt):
    n, m = Bc.shape
    blk = np.zeros((n + m, n + m))
    blk[:n, :n] = Ac * dt
    blk[:n, n:] = Bc * dt
    E = expm(blk)
    return E[:n, :n], E[:n, n:]


def oscillator2():
    # Single damped oscillator, one force input, both states measured.
    # One actuator attack channel and one attack channel on the position sensor.
    omega0, zeta, dt = 1.4, 0.3, 0.3
    Ac = np.array([[0.0, 1.0], [-omega0 ** 2, -2.0 * zeta * omega0]])
    Bc = np.array([[0.0], [1.0]])
    A, B = zoh(Ac, Bc, dt)
    C = np.eye(2)
    Gamma = np.hstack([B, np.zeros((2, 1))])
    Psi = np.array([[0.0, 1.0], [0.0, 0.0]])
    return SystemModel(
        A=A, B=B, C=C, Gamma=Gamma, Psi=Psi,
        Sigma_w=np.array([[4e-3, 5e-4], [5e-4, 3e-3]]),
        Sigma_v=5e-3 * np.eye(2),
        Sigma_x=np.eye(2),
        x_bar=np.zeros(2),
        name="oscillator2",
    )


def coupled4():
    # Two spring-coupled damped carts; a force input on each cart; all four
    # states measured.  The attacker owns both actuator channels but can only
    # tamper with the two position sensors -- the velocity measurements stay
    # honest, so perfect residual cancellation is impossible and the
    # stealth/disruption trade-off is genuine.
    k1, k2, kc = 1.2, 0.9, 0.4
    c1, c2 = 0.4, 0.5
    dt = 0.25
    Ac = np.array([
        [0.0, 1.0, 0.0, 0.0],
        [-(k1 + kc), -c1, kc, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [kc, 0.0, -(k2 + kc), -c2],
    ])
    Bc = np.array([
        [0.0, 0.0],
        [1.0, 0.0],
        [0.0, 0.0],
        [0.0, 1.0],
    ])
    A, B = zoh(Ac, Bc, dt)
    C = np.eye(4)
    Gamma = np.hstack([B, np.zeros((4, 2))])
    Psi = np.zeros((4, 4))
    Psi[0, 2] = 1.0
    Psi[2, 3] = 1.0
    return SystemModel(
        A=A, B=B, C=C, Gamma=Gamma, Psi=Psi,
        Sigma_w=1e-3 * np.diag([2.0, 4.0, 2.0, 4.0]),
        Sigma_v=1e-2 * np.eye(4),
        Sigma_x=2.0 * np.eye(4),
        x_bar=np.zeros(4),
        name="coupled4",
    )


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    for model in (oscillator2(), coupled4()):
        report = validate(model)
        assert report.ok, f"{model.name}: {report.messages}"
        path = OUT / f"{model.name}.json"
        save_model(model, path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
