"""ResNet18 classifier variants matching the MedMNIST benchmark release.

The 28x28 variant is the CIFAR-style ResNet18 (3x3 stem, no max-pool) used
by the official training scripts; the 224 variant is torchvision's
resnet18 with the stem and head adapted to the dataset. Checkpoints are
accepted as raw state dicts or under the usual wrapper keys.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import torch
import torch.nn as nn
import torch.nn.functional as F

from .datasets import ExportError


class BasicBlock(nn.Module):
    expansion = 1

    def __init__(self, in_planes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = nn.Conv2d(
            in_planes, planes, kernel_size=3, stride=stride, padding=1, bias=False
        )
        self.bn1 = nn.BatchNorm2d(planes)
        self.conv2 = nn.Conv2d(
            planes, planes, kernel_size=3, stride=1, padding=1, bias=False
        )
        self.bn2 = nn.BatchNorm2d(planes)
        self.shortcut = nn.Sequential()
        if stride != 1 or in_planes != planes * self.expansion:
            self.shortcut = nn.Sequential(
                nn.Conv2d(
                    in_planes, planes * self.expansion,
                    kernel_size=1, stride=stride, bias=False,
                ),
                nn.BatchNorm2d(planes * self.expansion),
            )

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        out = out + self.shortcut(x)
        return F.relu(out)


class SmallResNet(nn.Module):
    """CIFAR-style ResNet for 28x28 inputs."""

    def __init__(self, num_blocks, in_channels: int, num_classes: int):
        super().__init__()
        self.in_planes = 64
        self.conv1 = nn.Conv2d(
            in_channels, 64, kernel_size=3, stride=1, padding=1, bias=False
        )
        self.bn1 = nn.BatchNorm2d(64)
        self.layer1 = self._make_layer(64, num_blocks[0], stride=1)
        self.layer2 = self._make_layer(128, num_blocks[1], stride=2)
        self.layer3 = self._make_layer(256, num_blocks[2], stride=2)
        self.layer4 = self._make_layer(512, num_blocks[3], stride=2)
        self.linear = nn.Linear(512 * BasicBlock.expansion, num_classes)

    def _make_layer(self, planes: int, blocks: int, stride: int) -> nn.Sequential:
        strides = [stride] + [1] * (blocks - 1)
        layers = []
        for s in strides:
            layers.append(BasicBlock(self.in_planes, planes, s))
            self.in_planes = planes * BasicBlock.expansion
        return nn.Sequential(*layers)

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.layer1(out)
        out = self.layer2(out)
        out = self.layer3(out)
        out = self.layer4(out)
        out = F.avg_pool2d(out, 4)
        out = out.view(out.size(0), -1)
        return self.linear(out)


def resnet18_28(in_channels: int, num_classes: int) -> SmallResNet:
    return SmallResNet([2, 2, 2, 2], in_channels, num_classes)


def resnet18_224(in_channels: int, num_classes: int) -> nn.Module:
    try:
        from torchvision.models import resnet18
    except ImportError:
        raise ExportError(
            "torchvision is required for --input-size 224"
        ) from None
    model = resnet18(num_classes=num_classes)
    if in_channels != 3:
        model.conv1 = nn.Conv2d(
            in_channels, 64, kernel_size=7, stride=2, padding=3, bias=False
        )
    return model


def build_model(input_size: int, in_channels: int, num_classes: int) -> nn.Module:
    if input_size == 28:
        return resnet18_28(in_channels, num_classes)
    if input_size == 224:
        return resnet18_224(in_channels, num_classes)
    raise ExportError(f"unsupported input size {input_size}; expected 28 or 224")


_WRAPPER_KEYS = ("net", "model", "state_dict")


def load_checkpoint(model: nn.Module, path: Union[str, Path]) -> None:
    """Load weights from a checkpoint file into the model, strictly.

    Accepts a bare state dict or one nested under a common wrapper key;
    DataParallel ``module.`` prefixes are stripped. Any key or shape
    mismatch is fatal: silently partial loads would corrupt the exported
    probabilities.
    """
    path = Path(path)
    if not path.exists():
        raise ExportError(f"weights file not found: {path}")
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ExportError(f"{path}: cannot read checkpoint ({exc})") from None
    state = payload
    if isinstance(payload, dict) and not _looks_like_state_dict(payload):
        for key in _WRAPPER_KEYS:
            if key in payload and _looks_like_state_dict(payload[key]):
                state = payload[key]
                break
        else:
            raise ExportError(
                f"{path}: no state dict found (top-level keys: "
                f"{sorted(payload)[:8]})"
            )
    state = {k.removeprefix("module."): v for k, v in state.items()}
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ExportError(f"{path}: checkpoint does not fit the model: {exc}") from None


def _looks_like_state_dict(obj) -> bool:
    return isinstance(obj, dict) and obj and all(
        isinstance(v, torch.Tensor) for v in obj.values()
    )
