"""Clean valuer interface (port)"""

from abc import ABC, abstractmethod

import numpy as np


class CleanValuer(ABC):
    """
    Risk-free clean value Q of a contract at the grid nodes.

    `value` is ex-dividend: the payment falling on node k has already been made and is
    excluded. `cum_value` adds it back, giving Q_t = ΔA_t + π^r_t(A).
    """

    @abstractmethod
    def value(self, k: int, state: np.ndarray) -> np.ndarray:
        """Ex-dividend clean value at node k for asset states (paths, assets)"""
        pass

    @abstractmethod
    def delta(self, k: int, state: np.ndarray) -> np.ndarray:
        """Sensitivity of the ex-dividend clean value to each asset (paths, assets)"""
        pass

    @abstractmethod
    def payment(self, k: int, state: np.ndarray) -> np.ndarray:
        """Amount paid on node k (zero when no payment falls on it)"""
        pass

    def cum_value(self, k: int, state: np.ndarray) -> np.ndarray:
        return self.value(k, state) + self.payment(k, state)
