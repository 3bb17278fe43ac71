"""Binary image reconstruction from ray sums with a simulated V2 dynamical Ising machine."""
