"""CUR hyper-reduction."""
