import torch
import torch.nn.functional as torch_functional


def horizontal_flip(images):
    return torch.flip(images, dims=[3])


def random_flip(images, generator, probability=0.5):
    """Mirrors each image of the (N, C, H, W) batch left to right with the given probability."""
    flips = torch.rand(images.shape[0], generator=generator) < probability
    return torch.where(flips.view(-1, 1, 1, 1), horizontal_flip(images), images)


def random_crop(images, generator, padding=4):
    """
    Pads each image by reflection on every side and cuts back a window of the original size
    at a uniformly drawn offset.
    """
    if padding == 0:
        return images
    n, _, height, width = images.shape
    padded = torch_functional.pad(images, (padding, padding, padding, padding), mode="reflect")
    rows = torch.randint(0, 2 * padding + 1, (n,), generator=generator)
    columns = torch.randint(0, 2 * padding + 1, (n,), generator=generator)
    crops = [
        padded[i, :, r : r + height, c : c + width]
        for i, (r, c) in enumerate(zip(rows.tolist(), columns.tolist()))
    ]
    return torch.stack(crops)


def augment(images, generator, enabled=True, flip_probability=0.5, padding=4):
    """Random horizontal flip then random reflect-padded crop; the identity when disabled."""
    if not enabled:
        return images
    return random_crop(random_flip(images, generator, flip_probability), generator, padding)
