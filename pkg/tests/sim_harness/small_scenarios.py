from bb84sim import DetectorParams, EncoderConfig, Scenario
from bb84sim.scenario import (FiberConfig, ProtocolConfig, ReceiverConfig,
                              RunConfig, SourceConfig)


def bright_scenario(*, symbols=2_000_000, threads=1, dark_rate_cps=1000.0,
                    dead_time_s=0.0, extinction_db=20.0, seed=7, **protocol):
    """Short, bright four-modulator link with plenty of sifted bits."""
    detector = dict(efficiency=0.5, dark_rate_cps=dark_rate_cps, dead_time_s=dead_time_s)
    return Scenario(
        name="bright",
        source=SourceConfig(center_nm=1550.0, width_nm=0.5, n_slices=8),
        encoder=EncoderConfig(extinction_db=extinction_db),
        fiber=FiberConfig(length_km=0.0),
        detector0=DetectorParams(name="detector0", **detector),
        detector1=DetectorParams(name="detector1", **detector),
        receiver=ReceiverConfig(window_fraction=1.0),
        protocol=ProtocolConfig(**{"rate_hz": 1e8, "mu": 0.5, "prbs_order": 9, **protocol}),
        run=RunConfig(symbols=symbols, master_seed=seed, threads=threads, chunk_frames=512))
