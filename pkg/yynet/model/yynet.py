import structlog
import torch

from yynet.autograd import functional as F
from yynet.autograd.tensor import Tensor
from yynet.model.blocks import BranchKind, BranchLayer, yin_input
from yynet.model.fusion import combine, fused_channels
from yynet.nn.layers import Activation, Dropout, Linear
from yynet.nn.module import Module, ModuleList, resolve_dtype
from yynet.util.errors import ConfigError, ShapeMismatch
from yynet.util.util import derive_seed, generator_from_seed

log = structlog.get_logger()


class YYNet(Module):
    """
    Two stems fed with the same image, without a shared stem:
    the Yin branch sees a single channel (red plane or channel mean) and strides late,
    the Yang branch sees RGB and strides early.
    Their same-shape embeddings are fused by a parameter-free formula
    and continue through single-path layers into a pooled linear head.

    forward returns logits; softmax is applied only by the loss and by `predict_probabilities`.
    """

    def __init__(self, config, dtype=None, dropout_seed=0):
        super().__init__()
        config.validate()
        self.config = config
        self.dtype = resolve_dtype(dtype)
        options = config.block_options(self.dtype)

        self.yin = ModuleList()
        self.yang = ModuleList()
        yin_channels, yang_channels = 1, 3
        width = config.yy_start_channels
        for _ in range(config.yy_layers):
            yin_layer = BranchLayer(
                BranchKind.YIN, yin_channels, width, config.yy_mbconv_per_layer, config.channels_per_mbconv, options=options
            )
            yang_layer = BranchLayer(
                BranchKind.YANG, yang_channels, width, config.yy_mbconv_per_layer, config.channels_per_mbconv, options=options
            )
            self.yin.append(yin_layer)
            self.yang.append(yang_layer)
            yin_channels, yang_channels = yin_layer.out_channels, yang_layer.out_channels
            width = yin_layer.out_channels

        self.single_path = ModuleList()
        channels = fused_channels(yin_channels, config.fusion_mode)
        resnet_width = config.sp_start_channels
        for _ in range(config.sp_layers):
            layer = BranchLayer(
                BranchKind.SINGLE_PATH,
                channels,
                resnet_width,
                config.sp_mbconv_per_layer,
                config.channels_per_mbconv,
                extra_stride=config.extra_sp_stride2,
                options=options,
            )
            self.single_path.append(layer)
            channels = resnet_width = layer.out_channels

        self.pre_classifier = Linear(channels, config.pre_classifier_neurons, bias=config.head_bias, dtype=self.dtype)
        self.head_activation = Activation("gelu")
        self.dropout = Dropout(config.dropout_rate, seed=dropout_seed)
        self.classifier = Linear(
            config.pre_classifier_neurons, config.num_classes, bias=config.head_bias, dtype=self.dtype
        )

        shapes = self.branch_shapes()
        if shapes["yin"] != shapes["yang"]:
            raise ConfigError(f"Yin and Yang embeddings differ in shape: {shapes['yin']} vs {shapes['yang']}")

    @property
    def feature_channels(self):
        return self.pre_classifier.in_features

    def branch_shapes(self, input_resolution=None):
        """(channels, height, width) of the Yin and Yang embeddings at the fusion gate."""
        size = self.config.input_resolution if input_resolution is None else input_resolution
        shapes = {}
        for name, layers in (("yin", self.yin), ("yang", self.yang)):
            branch_size = size
            for layer in layers:
                branch_size = layer.output_size(branch_size)
            shapes[name] = (layers[-1].out_channels, branch_size, branch_size)
        return shapes

    def stride_trace(self, input_resolution=None):
        """(name, channels, spatial size) after every sub-block, in forward order."""
        size = self.config.input_resolution if input_resolution is None else input_resolution
        rows = [("input", 3, size)]
        for name, layers in (("yin", self.yin), ("yang", self.yang)):
            branch_size = size
            for index, layer in enumerate(layers):
                layer_rows = layer.trace(branch_size, prefix=f"{name}.{index}.")
                rows.extend(layer_rows)
                branch_size = layer_rows[-1][2]
        channels, fused_size, _ = self.branch_shapes(size)["yin"]
        rows.append(("fusion", fused_channels(channels, self.config.fusion_mode), fused_size))
        for index, layer in enumerate(self.single_path):
            layer_rows = layer.trace(fused_size, prefix=f"single_path.{index}.")
            rows.extend(layer_rows)
            fused_size = layer_rows[-1][2]
        rows.append(("head", self.config.num_classes, 1))
        return rows

    def embeddings(self, x):
        """The Yang (A) and Yin (I) embeddings entering the fusion gate."""
        yin = yin_input(x, self.config.yin_mode)
        for layer in self.yin:
            yin = layer(yin)
        yang = x
        for layer in self.yang:
            yang = layer(yang)
        return yang, yin

    def forward(self, x):
        resolution = self.config.input_resolution
        if x.dim() != 4 or x.shape[1:] != (3, resolution, resolution):
            raise ShapeMismatch("YYNet input", x.shape, (x.shape[0] if x.dim() else 0, 3, resolution, resolution))
        if x.dtype != self.dtype:
            x = Tensor(x.data, dtype=self.dtype)
        yang, yin = self.embeddings(x)
        y = combine(yang, yin, self.config.fusion, self.config.fusion_mode)
        for layer in self.single_path:
            y = layer(y)
        y = F.global_avg_pool(y)
        y = self.dropout(self.head_activation(self.pre_classifier(y)))
        return self.classifier(y)

    def rng_state(self):
        return self.dropout.generator.get_state()

    def set_rng_state(self, state):
        self.dropout.generator.set_state(state)

    def __repr__(self):
        return (
            f"YYNet(yy={self.config.yy_start_channels}, sp={self.config.sp_start_channels}, "
            f"fusion={self.config.fusion_label})"
        )


def build(config, seed, dtype=None):
    """A YYNet whose parameters and dropout masks are determined by `seed`."""
    model = YYNet(config, dtype=dtype, dropout_seed=derive_seed(seed, 1))
    model.randomize(generator_from_seed(seed, 0))
    log.debug(
        "built model",
        seed=seed,
        fusion=config.fusion_label,
        parameters=sum(p.numel() for p in model.parameters()),
    )
    return model


def predict_probabilities(model, x):
    """Class probabilities (N, num_classes) for images x, computed in evaluation mode."""
    was_training = model.training
    model.eval()
    try:
        return F.softmax(model(x))
    finally:
        model.train(was_training)


def predict_labels(model, x):
    return torch.argmax(predict_probabilities(model, x).data, dim=1)
