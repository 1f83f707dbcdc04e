"""Scene-graph contrastive representation learning for driver-action prediction."""
