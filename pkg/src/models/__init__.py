"""Grid types, component specs, traces and manifests."""
