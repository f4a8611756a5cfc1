# Utilities for evade-lite (configuration, logging, errors, validation)
