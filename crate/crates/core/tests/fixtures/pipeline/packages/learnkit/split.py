def train_test_split(*arrays, test_size=0.25):
    """Split arrays or matrices into random train and test subsets."""
    return arrays
