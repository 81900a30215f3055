"""Tube MPC for LPV systems with finite-step contractive terminal sets."""
