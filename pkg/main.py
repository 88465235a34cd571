if __name__ == "__main__":
    from src.main import cli

    cli()
