"""Noise channels on the source state and noisy end-to-end evaluation."""

import logging
from typing import Optional, Tuple

import numpy as np

from ..core.exceptions import ContextualityError, NoiseModelError, NoiseParameterError
from ..data.peres_mermin import build_ideal_state
from ..models.domain import CorrelatorReport, NoSignalingReport, SignMode, StateSpec
from ..models.statistics import NoiseModel
from ..quantum.linalg import DensityOperator, StateVector
from .measurement_service import SequentialMeasurementService

logger = logging.getLogger(__name__)


def phase_unitary(phase: float) -> np.ndarray:
    """diag(1, e^{iφ}) on qubits 1 and 2, identity on 3 and 4.

    Acting on |ψ⁻>₁₃ ⊗ |ψ⁻>₂₄ this turns each singlet into
    (|01> - e^{iφ}|10>)/√2.
    """
    gate = np.diag([1.0, np.exp(1j * phase)])
    return np.kron(np.kron(gate, gate), np.eye(4))


class NoiseService:
    """Builds noisy states and engines from a NoiseModel."""

    def apply_noise(
        self, model: NoiseModel, ideal: Optional[StateVector] = None
    ) -> DensityOperator:
        """
        Apply preparation noise: v·|Ψ_φ><Ψ_φ| + (1-v)·I/16.

        The measurement visibility is consumed by the sequential engine and
        the detection efficiency by sampling; neither touches the state.

        Args:
            model: Noise parameters
            ideal: Pure source state; defaults to the ideal four-qubit state

        Returns:
            Noisy 16-dimensional density operator
        """
        if not isinstance(model, NoiseModel):
            raise NoiseParameterError("apply_noise expects a NoiseModel")
        psi = ideal if ideal is not None else build_ideal_state()
        if psi.dim != 16:
            raise NoiseModelError(
                "Noise acts on the 16-dimensional source state",
                details={"dim": psi.dim},
            )

        try:
            amps = psi.amplitudes
            if model.prep_phase_error != 0.0:
                amps = phase_unitary(model.prep_phase_error) @ amps
            v = model.state_white_noise
            rho = v * np.outer(amps, amps.conj()) + (1.0 - v) * np.eye(16) / 16.0
            logger.debug(
                "Applied preparation noise",
                extra={"v": v, "phi": model.prep_phase_error},
            )
            return DensityOperator(matrix=rho)
        except ContextualityError:
            raise
        except Exception as e:
            logger.error(f"Applying noise failed: {e}", exc_info=True)
            raise NoiseModelError(
                f"Applying noise failed: {str(e)}", details=model.model_dump()
            )

    def state_spec(self, model: NoiseModel) -> StateSpec:
        """Describe the source state ``apply_noise`` builds for this model."""
        if model.state_white_noise == 1.0 and model.prep_phase_error == 0.0:
            return StateSpec(description="ideal")
        return StateSpec(
            description="noisy",
            parameters={
                "state_white_noise": model.state_white_noise,
                "prep_phase_error": model.prep_phase_error,
            },
        )

    def prepare(self, model: NoiseModel) -> Tuple[StateSpec, DensityOperator]:
        return self.state_spec(model), self.apply_noise(model)

    def engine(self, model: NoiseModel) -> SequentialMeasurementService:
        return SequentialMeasurementService(
            measurement_visibility=model.per_measurement_visibility
        )

    def evaluate(
        self, model: NoiseModel, mode: SignMode = SignMode.ABSOLUTE
    ) -> CorrelatorReport:
        """Exact χ, S, ω under a noise model."""
        return self.engine(model).evaluate_omega(self.apply_noise(model), mode)

    def no_signaling(self, model: NoiseModel) -> NoSignalingReport:
        return self.engine(model).no_signaling_report(self.apply_noise(model))
