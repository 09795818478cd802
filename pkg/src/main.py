from .cli import cli


def main():
    cli(prog_name="nsfd")


if __name__ == "__main__":
    main()
