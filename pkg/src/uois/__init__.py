"""Non-neural machinery for two-stage unseen-object instance segmentation."""
