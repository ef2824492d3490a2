"""Random small scenario instances and their oracle SNRs, shared by several test files."""

import numpy as np

import oracles
from stars_isac.isac import decode_rsu_action
from stars_isac.scenario import ScenarioConfig, VehicleState, vehicle_state_at
from stars_isac.stars import decode_car_action


def random_instance(rng, side=2, ny=2, nz=2):
    cfg = ScenarioConfig(
        m_side=side, n_tx_y=ny, n_tx_z=nz, n_rx_y=ny, n_rx_z=nz,
        pathloss_ref=10 ** rng.uniform(-4, -2), rcs_std=rng.uniform(0.1, 20), mf_gain=rng.uniform(1, 20),
        user_offset=tuple(rng.uniform(-1, 1, 3)),
    )
    pos = np.array([rng.uniform(-20, 40), rng.uniform(-60, 60), cfg.stars_height])
    vehicle = VehicleState(position=pos, heading=rng.uniform(0, 2 * np.pi), speed=20.0, slot_index=0)
    raw = rng.uniform(-1, 1, cfg.car_action_dim)
    profile = decode_car_action(raw, 3)
    beams = decode_rsu_action(rng.uniform(-1, 1, cfg.rsu_action_dim), cfg.tx_power, cfg.n_tx, cfg.n_rx)
    return cfg, vehicle, profile, beams


def oracle_snrs(cfg, vehicle, profile, beams):
    start_heading = vehicle_state_at(cfg, 0).heading
    p = dict(
        n_ty=cfg.n_tx_y, n_tz=cfg.n_tx_z, n_ry=cfg.n_rx_y, n_rz=cfg.n_rx_z, side=cfg.m_side,
        alpha0=cfg.pathloss_ref, d0=cfg.pathloss_ref_dist, z_rsu=cfg.pathloss_exp_rsu, z_user=cfg.pathloss_exp_user,
        rcs_std=cfg.rcs_std, eta=cfg.mf_gain, sigma_s=cfg.sensing_noise_power, sigma_c=cfg.comm_noise_power,
        w_tx=list(beams.w_tx), w_rx=list(beams.w_rx), amp_t=list(profile.amp_t), amp_r=list(profile.amp_r),
        phase_t=list(profile.phase_t), phase_r=list(profile.phase_r),
    )
    return oracles.physics(cfg.rsu_position, tuple(vehicle.position), vehicle.heading, cfg.user_offset, start_heading, p)
