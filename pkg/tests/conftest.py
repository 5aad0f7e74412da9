from spdefit.model import (ConstantSequence, ExplicitInitial, SpdeModel,
                           ZeroInitial)


def scalar_ou_model(mu: float = 1.0, sigma: float = 1.0,
                    u0: float = 0.0) -> SpdeModel:
    """A model whose every mode is the same OU process with rate mu."""
    init = ZeroInitial() if u0 == 0.0 else ExplicitInitial(
        values=tuple([u0] * 4096))
    return SpdeModel(nu=ConstantSequence(mu), rho=ConstantSequence(0.0),
                     gamma=0.0, m=1.0, sigma=sigma, theta_true=1.0,
                     u0=init)
