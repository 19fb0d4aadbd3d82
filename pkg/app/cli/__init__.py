"""Command-line interface: argparse router and one module per subcommand."""
