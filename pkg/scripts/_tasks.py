"""Shared synthetic stand-ins used by the experiment scripts."""
from linfold.dataio import SplitSpec, split, synth_dataset
from linfold.network import build_network
from linfold.training import TrainConfig, train

SCALED_FASHION = (64, 64, 32, 32, 16, 16)  # 1024/512/256 preset divided by 16


def trained_task(widths, seed, n=1500, features=8, classes=3, epochs=30, shift=1.0,
                 fractions=(0.6, 0.2, 0.2)):
    ds = synth_dataset(n, features, classes, seed=seed, shift=shift)
    tr, pr, te = split(ds, SplitSpec(*fractions, seed=seed))
    net = build_network(features, widths, classes, seed=seed)
    net = train(net, tr, TrainConfig(epochs, 32, 0.05, seed)).net
    return net, tr, pr, te
