"""Services: one class per concern with a module-level singleton."""
